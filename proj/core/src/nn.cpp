#include "pixelstack/nn.hpp"

#include <cmath>

#include "pixelstack/error.hpp"
#include "pixelstack/ops.hpp"

namespace pixelstack {

IntMap IntMap::slice(std::size_t first, std::size_t count) const {
  if (first + count > n) throw ShapeError("IntMap::slice out of range");
  IntMap out(count, channels, height, width);
  const auto sz = item_size();
  std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(first * sz), count * sz, out.values.begin());
  return out;
}

IntMap IntMap::gather(const std::vector<std::size_t>& items) const {
  IntMap out(items.size(), channels, height, width);
  const auto sz = item_size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i] >= n) throw ShapeError("IntMap::gather index out of range");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(items[i] * sz), sz,
                out.values.begin() + static_cast<std::ptrdiff_t>(i * sz));
  }
  return out;
}

Conv2d::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Rng& rng,
               std::size_t stride_, Tensor mask_)
    : mask(std::move(mask_)), stride(stride_) {
  if (kernel % 2 == 0) throw ShapeError("Conv2d '" + name + "': kernel must be odd");
  const double fan_in = static_cast<double>(in_channels * kernel * kernel);
  const double bound = std::sqrt(6.0 / fan_in);
  std::vector<double> w(out_channels * in_channels * kernel * kernel);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  weight = Parameter(name + ".w", Tensor::from_data({out_channels, in_channels, kernel, kernel}, std::move(w), true));
  bias = Parameter(name + ".b", Tensor::zeros({out_channels}, true));
}

Tensor Conv2d::operator()(const Tensor& x) const { return conv2d(x, weight.value, bias.value, mask, stride); }

void Conv2d::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

ResBlock::ResBlock(const std::string& name, std::size_t channels, std::size_t bottleneck, Rng& rng)
    : conv3_(name + ".conv3", channels, bottleneck, 3, rng), conv1_(name + ".conv1", bottleneck, channels, 1, rng) {}

Tensor ResBlock::operator()(const Tensor& x) const { return add(x, conv1_(relu(conv3_(relu(x))))); }

void ResBlock::collect(ParameterList& out) {
  conv3_.collect(out);
  conv1_.collect(out);
}

ResidualStack::ResidualStack(const std::string& name, std::size_t blocks, std::size_t channels,
                             std::size_t bottleneck, Rng& rng) {
  blocks_.reserve(blocks);
  for (std::size_t i = 0; i < blocks; ++i) {
    blocks_.emplace_back(name + ".block" + std::to_string(i), channels, bottleneck, rng);
  }
}

Tensor ResidualStack::operator()(const Tensor& x) const {
  Tensor h = x;
  for (const auto& b : blocks_) h = b(h);
  return h;
}

void ResidualStack::collect(ParameterList& out) {
  for (auto& b : blocks_) b.collect(out);
}

Tensor intensities_to_unit(const IntMap& x, std::size_t bins) {
  if (bins < 2) throw ValueError("intensities_to_unit needs at least two bins");
  std::vector<double> v(x.values.size());
  const double denom = static_cast<double>(bins - 1);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(x.values[i]) / denom;
  return Tensor::from_data({x.n, x.channels, x.height, x.width}, std::move(v));
}

}  // namespace pixelstack
