#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pixelstack/optim.hpp"
#include "pixelstack/rng.hpp"
#include "pixelstack/tensor.hpp"

namespace pixelstack {

/// Integer feature map in NCHW order: pixel intensities or code indices.
struct IntMap {
  std::size_t n = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int32_t> values;

  IntMap() = default;
  IntMap(std::size_t n_, std::size_t c, std::size_t h, std::size_t w, std::int32_t fill = 0)
      : n(n_), channels(c), height(h), width(w), values(n_ * c * h * w, fill) {}

  [[nodiscard]] std::size_t plane() const noexcept { return height * width; }
  [[nodiscard]] std::size_t item_size() const noexcept { return channels * height * width; }
  [[nodiscard]] std::int32_t& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
    return values[((b * channels + c) * height + y) * width + x];
  }
  [[nodiscard]] std::int32_t at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
    return values[((b * channels + c) * height + y) * width + x];
  }
  /// Copy of items [first, first + count).
  [[nodiscard]] IntMap slice(std::size_t first, std::size_t count) const;
  /// Items picked by index, in the given order.
  [[nodiscard]] IntMap gather(const std::vector<std::size_t>& items) const;

  friend bool operator==(const IntMap&, const IntMap&) = default;
};

/// Convolution layer with He-uniform weights, zero bias and an optional
/// constant weight mask.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Rng& rng,
         std::size_t stride = 1, Tensor mask = {});

  [[nodiscard]] Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out);

  [[nodiscard]] std::size_t in_channels() const { return weight.value.dim(1); }
  [[nodiscard]] std::size_t out_channels() const { return weight.value.dim(0); }
  [[nodiscard]] std::size_t kernel() const { return weight.value.dim(2); }

  Parameter weight;
  Parameter bias;
  Tensor mask;
  std::size_t stride = 1;
};

/// Full pre-activation residual block without normalisation:
/// x + conv1x1(relu(conv3x3(relu(x)))).
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(const std::string& name, std::size_t channels, std::size_t bottleneck, Rng& rng);

  [[nodiscard]] Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out);

 private:
  Conv2d conv3_;
  Conv2d conv1_;
};

class ResidualStack {
 public:
  ResidualStack() = default;
  ResidualStack(const std::string& name, std::size_t blocks, std::size_t channels, std::size_t bottleneck,
                Rng& rng);

  [[nodiscard]] Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out);
  [[nodiscard]] std::size_t size() const noexcept { return blocks_.size(); }

 private:
  std::vector<ResBlock> blocks_;
};

/// Scales integer intensities to [0, 1]: v / (bins - 1).
Tensor intensities_to_unit(const IntMap& x, std::size_t bins);

}  // namespace pixelstack
