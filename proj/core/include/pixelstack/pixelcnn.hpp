#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "pixelstack/nn.hpp"
#include "pixelstack/optim.hpp"
#include "pixelstack/rng.hpp"
#include "pixelstack/tensor.hpp"

namespace pixelstack {

/// Raster-scan ordering: rows top to bottom, columns left to right, then
/// channel groups (e.g. R, G, B).
struct RasterOrder {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t groups = 1;

  struct Position {
    std::size_t row, col, group;
  };

  [[nodiscard]] std::size_t size() const noexcept { return height * width * groups; }
  [[nodiscard]] std::size_t index(std::size_t row, std::size_t col, std::size_t group) const noexcept {
    return (row * width + col) * groups + group;
  }
  [[nodiscard]] Position position(std::size_t t) const noexcept {
    return {t / (width * groups), (t / groups) % width, t % groups};
  }
};

enum class MaskKind { A, B };

/// How channels are assigned to raster groups. `blocked`: the first C/G
/// channels belong to group 0, and so on. `interleaved`: channel c belongs to
/// group c % G.
enum class ChannelLayout { blocked, interleaved };

struct MaskedConvSpec {
  MaskKind kind = MaskKind::B;
  std::size_t kernel = 3;
  std::size_t groups = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  ChannelLayout in_layout = ChannelLayout::blocked;
  ChannelLayout out_layout = ChannelLayout::blocked;
};

[[nodiscard]] std::size_t channel_group(std::size_t channel, std::size_t channels, std::size_t groups,
                                        ChannelLayout layout);

/// Binary [out, in, k, k] causal mask. Rows above the centre and the centre
/// row left of the centre are open; the centre tap connects input group gi to
/// output group go iff gi < go (kind A) or gi <= go (kind B).
[[nodiscard]] Tensor make_weight_mask(const MaskedConvSpec& spec);

struct ModulatorSpec {
  std::size_t code_channels = 1;
  std::size_t code_bins = 16;
  std::size_t layers = 2;
  std::size_t hidden = 32;
  std::size_t upsample = 1;  // subpixel factor from code to output resolution
  /// When non-zero the modulator reads a continuous feature map with this
  /// many channels instead of one-hot codes.
  std::size_t feature_channels = 0;
};

struct PixelCNNConfig {
  std::size_t layers = 4;  // gated blocks; 0 means a per-bin bias only
  std::size_t hidden = 32;
  std::size_t bins = 16;
  std::size_t groups = 1;
  std::size_t kernel = 3;
  std::size_t first_kernel = 3;
  std::size_t classes = 0;  // > 0 enables class-conditional biases
  std::optional<ModulatorSpec> modulator;
};

/// Per-block additive biases for the filter and gate paths. Each tensor
/// broadcasts against [N, hidden, H, W]; undefined means "no bias".
struct BlockBiases {
  Tensor filter;
  Tensor gate;
};

/// Optional conditioning inputs of an autoregressive net.
struct Conditioning {
  const IntMap* codes = nullptr;    // consumed by a one-hot modulator
  Tensor features;                   // consumed by a feature modulator
  std::vector<std::int32_t> labels;  // consumed by class biases; one per item
};

/// Residual network mapping a code map to per-layer biases of the local model.
class Modulator {
 public:
  Modulator() = default;
  Modulator(const ModulatorSpec& spec, std::size_t blocks, std::size_t out_channels, Rng& rng);

  /// Biases at resolution (h * upsample, w * upsample).
  [[nodiscard]] std::vector<BlockBiases> operator()(const IntMap& codes) const;
  [[nodiscard]] std::vector<BlockBiases> operator()(const Tensor& features) const;
  void collect(ParameterList& out);
  /// Zeroes the output projections, so every produced bias is exactly 0.
  void zero_output();
  [[nodiscard]] const ModulatorSpec& spec() const noexcept { return spec_; }

 private:
  [[nodiscard]] std::vector<BlockBiases> body(const Tensor& input) const;

  ModulatorSpec spec_;
  Conv2d input_;
  ResidualStack body_;
  std::vector<Conv2d> out_filter_;
  std::vector<Conv2d> out_gate_;
};

/// x + proj(tanh(conv_f(x) + b_f) * sigmoid(conv_g(x) + b_g)), all masked B.
class GatedBlock {
 public:
  GatedBlock() = default;
  GatedBlock(const std::string& name, std::size_t channels, std::size_t kernel, std::size_t groups, Rng& rng);

  [[nodiscard]] Tensor operator()(const Tensor& x, const BlockBiases& biases) const;
  void collect(ParameterList& out);

  Conv2d conv_f;
  Conv2d conv_g;
  Conv2d proj;
};

struct ForwardTrace {
  /// h_0 (embedding output) followed by the output of every gated block.
  std::vector<Tensor> activations;
};

/// Masked gated convolutional density model over integer maps.
///
/// forward() maps x [N, G, H, W] with values in [0, bins) to logits
/// [N, bins, G, H, W]; the logits at raster position t depend only on values
/// at positions before t.
class AutoregressiveNet {
 public:
  AutoregressiveNet(PixelCNNConfig config, Rng& rng);

  AutoregressiveNet(const AutoregressiveNet&) = delete;
  AutoregressiveNet& operator=(const AutoregressiveNet&) = delete;
  AutoregressiveNet(AutoregressiveNet&&) noexcept = default;
  AutoregressiveNet& operator=(AutoregressiveNet&&) noexcept = default;

  [[nodiscard]] Tensor forward(const IntMap& x, const Conditioning& cond = {}, ForwardTrace* trace = nullptr) const;

  /// Combined modulator and class biases for `n` maps of the given size.
  [[nodiscard]] std::vector<BlockBiases> conditioning_biases(const Conditioning& cond, std::size_t n,
                                                            std::size_t height, std::size_t width) const;

  [[nodiscard]] const PixelCNNConfig& config() const noexcept { return config_; }
  [[nodiscard]] ParameterList parameters();

  [[nodiscard]] const Conv2d& embedding() const noexcept { return embed_; }
  [[nodiscard]] const std::vector<GatedBlock>& blocks() const noexcept { return blocks_; }
  [[nodiscard]] const Conv2d& head() const noexcept { return head_; }
  [[nodiscard]] Modulator* modulator() noexcept { return modulator_ ? &*modulator_ : nullptr; }
  [[nodiscard]] const Modulator* modulator() const noexcept { return modulator_ ? &*modulator_ : nullptr; }

 private:
  void check_input(const IntMap& x) const;

  PixelCNNConfig config_;
  Conv2d embed_;
  std::vector<GatedBlock> blocks_;
  Conv2d head_;
  std::vector<Parameter> class_filter_;  // [classes, hidden] per block
  std::vector<Parameter> class_gate_;
  std::optional<Modulator> modulator_;
};

/// Mean negative log-likelihood in nats per value of `x` under `logits`.
[[nodiscard]] Tensor nll(const Tensor& logits, const IntMap& x);

/// Per-item summed NLL in nats (no gradient).
[[nodiscard]] std::vector<double> nll_per_item(const Tensor& logits, const IntMap& x);

[[nodiscard]] double nats_to_bits(double nats) noexcept;
/// `total_nats` spread over `dims` values, in bits per value.
[[nodiscard]] double bits_per_dim(double total_nats, double dims);

// ---------------------------------------------------------------------------
// Sampling

enum class SamplerMode { naive, incremental };

struct SamplerConfig {
  double temperature = 1.0;
  std::uint64_t seed = 0;
  SamplerMode mode = SamplerMode::incremental;
};

/// Read-only view of the sampler's activation buffers (channels-last).
class ActivationCache {
 public:
  virtual ~ActivationCache() = default;
  /// Layer 0 is the embedding output; layer k > 0 is gated block k-1.
  [[nodiscard]] virtual std::size_t layers() const = 0;
  [[nodiscard]] virtual double activation(std::size_t layer, std::size_t item, std::size_t channel, std::size_t row,
                                          std::size_t col) const = 0;
  [[nodiscard]] virtual double logit(std::size_t item, std::size_t bin, std::size_t group, std::size_t row,
                                     std::size_t col) const = 0;
};

/// Called after each raster position has been drawn for every batch item.
using SampleObserver = std::function<void(std::size_t t, const IntMap& partial, const ActivationCache& cache)>;

/// Draws `n` maps of size height x width in raster order, each value from
/// softmax(logits / T). Batch items at one position are drawn before moving
/// on; unsampled positions hold 0. Both modes consume the generator in the
/// same order and produce bit-identical output.
[[nodiscard]] IntMap sample(const AutoregressiveNet& net, std::size_t n, std::size_t height, std::size_t width,
                            const Conditioning& cond, const SamplerConfig& cfg);

/// Recomputes the whole map at every step.
[[nodiscard]] IntMap sample_naive(const AutoregressiveNet& net, std::size_t n, std::size_t height,
                                  std::size_t width, const Conditioning& cond, const SamplerConfig& cfg,
                                  const SampleObserver& observer = {});

/// Keeps per-layer buffers and after each draw recomputes only the region
/// reachable from the changed position, so the per-step cost does not
/// depend on the map height.
[[nodiscard]] IntMap sample_incremental(const AutoregressiveNet& net, std::size_t n, std::size_t height,
                                        std::size_t width, const Conditioning& cond, const SamplerConfig& cfg,
                                        const SampleObserver& observer = {});

/// Index drawn from softmax(logits / temperature) by inverse CDF with `u` in [0, 1).
[[nodiscard]] std::size_t draw_categorical(std::span<const double> logits, double temperature, double u);

}  // namespace pixelstack
