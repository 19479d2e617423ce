#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pixelstack/nn.hpp"
#include "pixelstack/optim.hpp"
#include "pixelstack/rng.hpp"
#include "pixelstack/tensor.hpp"

namespace pixelstack {

/// k code vectors of dimension d with exponential-moving-average K-means state.
class Codebook {
 public:
  Codebook() = default;
  Codebook(std::size_t k, std::size_t d, double gamma = 0.99, double epsilon = 1e-5, bool use_ema = true);

  [[nodiscard]] std::size_t k() const noexcept { return k_; }
  [[nodiscard]] std::size_t d() const noexcept { return d_; }
  [[nodiscard]] double gamma() const noexcept { return gamma_; }
  [[nodiscard]] double epsilon() const noexcept { return epsilon_; }
  [[nodiscard]] bool use_ema() const noexcept { return use_ema_; }
  [[nodiscard]] bool initialized() const noexcept { return initialized_; }

  /// Seeds the embeddings from the vectors of a first batch `z` [N, c*d, H, W]
  /// with k-means++ (D^2) sampling. Resets N to 1 and m to e.
  void init_from(const Tensor& z, Rng& rng);

  /// Overwrites embeddings (row-major [k, d]) and resets the EMA state to match.
  void set_embeddings(std::span<const double> values);

  /// Replaces codes whose EMA count fell below `min_count` with random
  /// vectors of `z`. Returns how many were replaced.
  std::size_t reseed_dead(const Tensor& z, double min_count, Rng& rng);

  /// Largest |e[j]*max(N[j], eps) - m[j]| over all entries.
  [[nodiscard]] double ema_residual() const;

  Parameter embeddings;        // "vq.e", [k, d]
  std::vector<double> counts;  // "vq.N", [k]
  std::vector<double> sums;    // "vq.m", [k, d]

 private:
  std::size_t k_ = 0, d_ = 0;
  double gamma_ = 0.99, epsilon_ = 1e-5;
  bool use_ema_ = true;
  bool initialized_ = false;
};

struct QuantizeResult {
  IntMap indices;          // [N, c, H, W]
  Tensor quantized;        // [N, c*d, H, W]; differentiable w.r.t. the embeddings only
  Tensor commitment_loss;  // mean ||z - sg(z')||^2 over elements
  Tensor codebook_loss;    // mean ||z' - sg(z)||^2 over elements
  double perplexity = 1.0;
};

struct VQLossConfig {
  double beta = 0.25;
  bool use_ema_codebook = true;
};

/// Nearest-neighbour assignment of every d-vector of `z` [N, c*d, H, W]
/// (channel ch*d + j holds component j of code channel ch). Ties go to the
/// lowest index.
[[nodiscard]] QuantizeResult quantize(const Tensor& z, const Codebook& cb);

/// Index of the nearest embedding to `v` (length d).
[[nodiscard]] std::size_t nearest_code(const Codebook& cb, std::span<const double> v);

/// Forward value z', gradient to z (the straight-through estimator).
[[nodiscard]] Tensor straight_through(const Tensor& z, const QuantizeResult& q);

/// recon + codebook*[!ema] + beta*commitment.
[[nodiscard]] Tensor vq_loss(const Tensor& recon_nll, const QuantizeResult& q, const VQLossConfig& cfg);

/// One EMA K-means step from the vectors of `z` assigned by `indices`.
void ema_update(Codebook& cb, const Tensor& z, const IntMap& indices);

/// exp(entropy) of the code histogram.
[[nodiscard]] double perplexity(std::span<const std::int32_t> indices, std::size_t k);

}  // namespace pixelstack
