#include "pixelstack/pixelcnn.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "pixelstack/error.hpp"
#include "pixelstack/ops.hpp"

namespace pixelstack {

std::size_t channel_group(std::size_t channel, std::size_t channels, std::size_t groups, ChannelLayout layout) {
  if (groups == 0 || channels % groups != 0) {
    throw ShapeError("channel count " + std::to_string(channels) + " is not divisible by " +
                     std::to_string(groups) + " groups");
  }
  if (layout == ChannelLayout::interleaved) return channel % groups;
  return channel / (channels / groups);
}

Tensor make_weight_mask(const MaskedConvSpec& spec) {
  if (spec.kernel % 2 == 0) throw ShapeError("masked convolution kernel must be odd");
  const std::size_t k = spec.kernel, c = k / 2;
  std::vector<double> m(spec.out_channels * spec.in_channels * k * k, 0.0);
  for (std::size_t o = 0; o < spec.out_channels; ++o) {
    const auto go = channel_group(o, spec.out_channels, spec.groups, spec.out_layout);
    for (std::size_t i = 0; i < spec.in_channels; ++i) {
      const auto gi = channel_group(i, spec.in_channels, spec.groups, spec.in_layout);
      const bool centre_open = spec.kind == MaskKind::A ? gi < go : gi <= go;
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          bool open = ky < c || (ky == c && kx < c);
          if (ky == c && kx == c) open = centre_open;
          m[((o * spec.in_channels + i) * k + ky) * k + kx] = open ? 1.0 : 0.0;
        }
    }
  }
  return Tensor::from_data({spec.out_channels, spec.in_channels, k, k}, std::move(m));
}

// ---------------------------------------------------------------------------

Modulator::Modulator(const ModulatorSpec& spec, std::size_t blocks, std::size_t out_channels, Rng& rng)
    : spec_(spec) {
  if (spec.upsample == 0) throw ConfigError("modulator upsample factor must be positive");
  if (spec.code_bins < 1 || spec.code_channels < 1 || spec.hidden < 1) {
    throw ConfigError("modulator needs positive code channels, bins and width");
  }
  const std::size_t r2 = spec.upsample * spec.upsample;
  const std::size_t in = spec.feature_channels > 0 ? spec.feature_channels : spec.code_channels * spec.code_bins;
  input_ = Conv2d("mod.in", in, spec.hidden * r2, 3, rng);
  body_ = ResidualStack("mod.res", spec.layers, spec.hidden, spec.hidden, rng);
  for (std::size_t b = 0; b < blocks; ++b) {
    out_filter_.emplace_back("mod.out" + std::to_string(b) + ".f", spec.hidden, out_channels, 1, rng);
    out_gate_.emplace_back("mod.out" + std::to_string(b) + ".g", spec.hidden, out_channels, 1, rng);
  }
}

std::vector<BlockBiases> Modulator::operator()(const IntMap& codes) const {
  if (spec_.feature_channels > 0) throw ConfigError("this modulator reads feature maps, not codes");
  if (codes.channels != spec_.code_channels) {
    throw ShapeError("modulator expects " + std::to_string(spec_.code_channels) + " code channels, got " +
                     std::to_string(codes.channels));
  }
  for (auto v : codes.values) {
    if (v < 0 || static_cast<std::size_t>(v) >= spec_.code_bins) {
      throw ValueError("code value " + std::to_string(v) + " outside [0, " + std::to_string(spec_.code_bins) + ")");
    }
  }
  return body(one_hot_nchw(codes.values, codes.n, codes.channels, codes.height, codes.width, spec_.code_bins));
}

std::vector<BlockBiases> Modulator::operator()(const Tensor& features) const {
  if (spec_.feature_channels == 0) throw ConfigError("this modulator reads one-hot codes, not feature maps");
  if (features.rank() != 4 || features.dim(1) != spec_.feature_channels) {
    throw ShapeError("modulator expects features [N, " + std::to_string(spec_.feature_channels) + ", h, w], got " +
                     shape_string(features.shape()));
  }
  return body(features);
}

std::vector<BlockBiases> Modulator::body(const Tensor& input) const {
  Tensor h = input_(input);
  if (spec_.upsample > 1) h = subpixel_upsample(h, spec_.upsample);
  h = relu(body_(h));
  std::vector<BlockBiases> out(out_filter_.size());
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].filter = out_filter_[b](h);
    out[b].gate = out_gate_[b](h);
  }
  return out;
}

void Modulator::collect(ParameterList& out) {
  input_.collect(out);
  body_.collect(out);
  for (std::size_t b = 0; b < out_filter_.size(); ++b) {
    out_filter_[b].collect(out);
    out_gate_[b].collect(out);
  }
}

void Modulator::zero_output() {
  for (auto* group : {&out_filter_, &out_gate_})
    for (auto& conv : *group) {
      for (auto& v : conv.weight.value.mutable_data()) v = 0.0;
      for (auto& v : conv.bias.value.mutable_data()) v = 0.0;
    }
}

// ---------------------------------------------------------------------------

GatedBlock::GatedBlock(const std::string& name, std::size_t channels, std::size_t kernel, std::size_t groups,
                       Rng& rng) {
  MaskedConvSpec spec{MaskKind::B, kernel, groups, channels, channels};
  conv_f = Conv2d(name + ".conv_f", channels, channels, kernel, rng, 1, make_weight_mask(spec));
  conv_g = Conv2d(name + ".conv_g", channels, channels, kernel, rng, 1, make_weight_mask(spec));
  spec.kernel = 1;
  proj = Conv2d(name + ".proj", channels, channels, 1, rng, 1, make_weight_mask(spec));
}

Tensor GatedBlock::operator()(const Tensor& x, const BlockBiases& biases) const {
  Tensor f = conv_f(x);
  Tensor g = conv_g(x);
  if (biases.filter.defined()) f = add(f, biases.filter);
  if (biases.gate.defined()) g = add(g, biases.gate);
  return add(x, proj(mul(tanh(f), sigmoid(g))));
}

void GatedBlock::collect(ParameterList& out) {
  conv_f.collect(out);
  conv_g.collect(out);
  proj.collect(out);
}

// ---------------------------------------------------------------------------

AutoregressiveNet::AutoregressiveNet(PixelCNNConfig config, Rng& rng) : config_(std::move(config)) {
  const auto& c = config_;
  if (c.bins < 2) throw ConfigError("autoregressive net needs at least 2 bins");
  if (c.groups < 1) throw ConfigError("autoregressive net needs at least one channel group");
  if (c.hidden % c.groups != 0) {
    throw ConfigError("hidden width " + std::to_string(c.hidden) + " must be divisible by " +
                      std::to_string(c.groups) + " channel groups");
  }
  if (c.kernel % 2 == 0 || c.first_kernel % 2 == 0) throw ConfigError("kernel sizes must be odd");

  embed_ = Conv2d("local.embed", c.groups * c.bins, c.hidden, c.first_kernel, rng, 1,
                  make_weight_mask({MaskKind::A, c.first_kernel, c.groups, c.groups * c.bins, c.hidden}));
  for (std::size_t b = 0; b < c.layers; ++b) {
    blocks_.emplace_back("local.block" + std::to_string(b), c.hidden, c.kernel, c.groups, rng);
  }
  head_ = Conv2d("local.head", c.hidden, c.bins * c.groups, 1, rng, 1,
                 make_weight_mask({MaskKind::B, 1, c.groups, c.hidden, c.bins * c.groups, ChannelLayout::blocked,
                                   ChannelLayout::interleaved}));
  if (c.classes > 0) {
    for (std::size_t b = 0; b < c.layers; ++b) {
      class_filter_.emplace_back("cls.block" + std::to_string(b) + ".f", Tensor::zeros({c.classes, c.hidden}, true));
      class_gate_.emplace_back("cls.block" + std::to_string(b) + ".g", Tensor::zeros({c.classes, c.hidden}, true));
    }
  }
  if (c.modulator) modulator_.emplace(*c.modulator, c.layers, c.hidden, rng);
}

void AutoregressiveNet::check_input(const IntMap& x) const {
  if (x.n == 0 || x.height == 0 || x.width == 0) throw ShapeError("autoregressive net input is empty");
  if (x.channels != config_.groups) {
    throw ShapeError("input has " + std::to_string(x.channels) + " channels, net models " +
                     std::to_string(config_.groups));
  }
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    const auto v = x.values[i];
    if (v < 0 || static_cast<std::size_t>(v) >= config_.bins) {
      throw ValueError("input value " + std::to_string(v) + " at index " + std::to_string(i) + " outside [0, " +
                       std::to_string(config_.bins) + ")");
    }
  }
}

std::vector<BlockBiases> AutoregressiveNet::conditioning_biases(const Conditioning& cond, std::size_t n,
                                                                std::size_t height, std::size_t width) const {
  std::vector<BlockBiases> out(blocks_.size());
  if (cond.codes && cond.features.defined()) throw ConfigError("give either codes or features, not both");
  if ((cond.codes || cond.features.defined()) && !modulator_) {
    throw ConfigError("conditioning map given to a net without a modulator");
  }
  if (modulator_ && (cond.codes || cond.features.defined())) {
    const auto r = modulator_->spec().upsample;
    const std::size_t cn = cond.codes ? cond.codes->n : cond.features.dim(0);
    const std::size_t ch = cond.codes ? cond.codes->height : cond.features.dim(2);
    const std::size_t cw = cond.codes ? cond.codes->width : cond.features.dim(3);
    if (cn != n || ch * r != height || cw * r != width) {
      throw ShapeError("conditioning map " + std::to_string(ch) + "x" + std::to_string(cw) + " (x" +
                       std::to_string(r) + ") does not match " + std::to_string(height) + "x" +
                       std::to_string(width));
    }
    if (!blocks_.empty()) out = cond.codes ? (*modulator_)(*cond.codes) : (*modulator_)(cond.features);
  }
  if (!cond.labels.empty()) {
    if (config_.classes == 0) throw ConfigError("class labels given to an unconditional net");
    if (cond.labels.size() != n) throw ShapeError("expected one class label per item");
    for (auto l : cond.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= config_.classes) {
        throw ValueError("class " + std::to_string(l) + " outside [0, " + std::to_string(config_.classes - 1) + "]");
      }
    }
    const Shape s{n, config_.hidden, 1, 1};
    for (std::size_t b = 0; b < out.size(); ++b) {
      const Tensor f = reshape(gather_rows(class_filter_[b].value, cond.labels), s);
      const Tensor g = reshape(gather_rows(class_gate_[b].value, cond.labels), s);
      out[b].filter = out[b].filter.defined() ? add(out[b].filter, f) : f;
      out[b].gate = out[b].gate.defined() ? add(out[b].gate, g) : g;
    }
  }
  return out;
}

Tensor AutoregressiveNet::forward(const IntMap& x, const Conditioning& cond, ForwardTrace* trace) const {
  check_input(x);
  const auto& c = config_;
  const Shape logit_shape{x.n, c.bins, c.groups, x.height, x.width};
  if (trace) trace->activations.clear();
  if (blocks_.empty()) {
    const Tensor bias = reshape(head_.bias.value, {1, c.bins * c.groups, 1, 1});
    return reshape(add(Tensor::zeros({x.n, c.bins * c.groups, x.height, x.width}), bias), logit_shape);
  }
  const auto biases = conditioning_biases(cond, x.n, x.height, x.width);
  Tensor h = embed_(one_hot_nchw(x.values, x.n, x.channels, x.height, x.width, c.bins));
  if (trace) trace->activations.push_back(h);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    h = blocks_[b](h, biases[b]);
    if (trace) trace->activations.push_back(h);
  }
  return reshape(head_(relu(h)), logit_shape);
}

ParameterList AutoregressiveNet::parameters() {
  ParameterList out;
  embed_.collect(out);
  for (auto& b : blocks_) b.collect(out);
  head_.collect(out);
  for (std::size_t b = 0; b < class_filter_.size(); ++b) {
    out.push_back(&class_filter_[b]);
    out.push_back(&class_gate_[b]);
  }
  if (modulator_) modulator_->collect(out);
  return out;
}

Tensor nll(const Tensor& logits, const IntMap& x) {
  if (logits.rank() != 5 || logits.dim(0) != x.n || logits.dim(2) != x.channels || logits.dim(3) != x.height ||
      logits.dim(4) != x.width) {
    throw ShapeError("nll: logits " + shape_string(logits.shape()) + " do not match target map");
  }
  return softmax_cross_entropy(logits, x.values, 1);
}

std::vector<double> nll_per_item(const Tensor& logits, const IntMap& x) {
  if (logits.rank() != 5 || logits.dim(0) != x.n || logits.dim(2) != x.channels || logits.dim(3) != x.height ||
      logits.dim(4) != x.width) {
    throw ShapeError("nll_per_item: logits " + shape_string(logits.shape()) + " do not match target map");
  }
  const std::size_t B = logits.dim(1), inner = x.item_size();
  const auto l = logits.data();
  std::vector<double> out(x.n, 0.0);
  for (std::size_t n = 0; n < x.n; ++n) {
    for (std::size_t i = 0; i < inner; ++i) {
      const double* base = l.data() + n * B * inner + i;
      double m = base[0];
      for (std::size_t b = 1; b < B; ++b) m = std::max(m, base[b * inner]);
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) s += std::exp(base[b * inner] - m);
      const auto target = static_cast<std::size_t>(x.values[n * inner + i]);
      out[n] += m + std::log(s) - base[target * inner];
    }
  }
  return out;
}

double nats_to_bits(double nats) noexcept { return nats / std::numbers::ln2; }

double bits_per_dim(double total_nats, double dims) {
  if (!(dims > 0)) throw ValueError("bits_per_dim needs a positive dimension count");
  return nats_to_bits(total_nats) / dims;
}

}  // namespace pixelstack
