#include "pixelstack/vq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pixelstack/error.hpp"
#include "pixelstack/ops.hpp"

namespace pixelstack {

namespace {

struct VectorLayout {
  std::size_t n, c, d, h, w;
  [[nodiscard]] std::size_t count() const { return n * c * h * w; }
  // Position p enumerates (n, ch, y, x) like an IntMap [N, c, H, W].
  [[nodiscard]] std::size_t offset(std::size_t p, std::size_t j) const {
    const std::size_t hw = h * w;
    const std::size_t item = p / (c * hw), ch = (p / hw) % c, s = p % hw;
    return ((item * c + ch) * d + j) * hw + s;
  }
};

VectorLayout layout_of(const Tensor& z, std::size_t d) {
  if (z.rank() != 4) throw ShapeError("expected z as [N, c*d, H, W], got " + shape_string(z.shape()));
  if (d == 0 || z.dim(1) % d != 0) {
    throw ShapeError("z has " + std::to_string(z.dim(1)) + " channels, not a multiple of code dimension " +
                     std::to_string(d));
  }
  return {z.dim(0), z.dim(1) / d, d, z.dim(2), z.dim(3)};
}

double squared_distance(const double* a, std::span<const double> z, const VectorLayout& l, std::size_t p) {
  double s = 0.0;
  for (std::size_t j = 0; j < l.d; ++j) {
    const double diff = z[l.offset(p, j)] - a[j];
    s += diff * diff;
  }
  return s;
}

}  // namespace

Codebook::Codebook(std::size_t k, std::size_t d, double gamma, double epsilon, bool use_ema)
    : k_(k), d_(d), gamma_(gamma), epsilon_(epsilon), use_ema_(use_ema) {
  if (k == 0 || d == 0) throw ConfigError("codebook needs k >= 1 and d >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("EMA decay must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("EMA epsilon must be positive");
  embeddings = Parameter("vq.e", Tensor::zeros({k, d}, !use_ema));
  counts.assign(k, 1.0);
  sums.assign(k * d, 0.0);
}

void Codebook::set_embeddings(std::span<const double> values) {
  if (values.size() != k_ * d_) throw ShapeError("codebook embeddings must have k*d entries");
  auto e = embeddings.value.mutable_data();
  std::copy(values.begin(), values.end(), e.begin());
  std::fill(counts.begin(), counts.end(), 1.0);
  std::copy(values.begin(), values.end(), sums.begin());
  initialized_ = true;
}

void Codebook::init_from(const Tensor& z, Rng& rng) {
  const auto l = layout_of(z, d_);
  const auto data = z.data();
  const std::size_t count = l.count();
  std::vector<double> chosen(k_ * d_);
  std::vector<double> best(count, std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < k_; ++c) {
    std::size_t pick = 0;
    if (c == 0) {
      pick = static_cast<std::size_t>(rng.below(count));
    } else {
      double total = 0.0;
      for (std::size_t p = 0; p < count; ++p) {
        best[p] = std::min(best[p], squared_distance(chosen.data() + (c - 1) * d_, data, l, p));
        total += best[p];
      }
      if (total <= 0.0) {
        pick = static_cast<std::size_t>(rng.below(count));
      } else {
        const double target = rng.uniform() * total;
        double acc = 0.0;
        pick = count - 1;
        for (std::size_t p = 0; p < count; ++p) {
          acc += best[p];
          if (target < acc) {
            pick = p;
            break;
          }
        }
      }
    }
    for (std::size_t j = 0; j < d_; ++j) chosen[c * d_ + j] = data[l.offset(pick, j)];
  }
  set_embeddings(chosen);
}

std::size_t Codebook::reseed_dead(const Tensor& z, double min_count, Rng& rng) {
  const auto l = layout_of(z, d_);
  const auto data = z.data();
  auto e = embeddings.value.mutable_data();
  std::size_t replaced = 0;
  for (std::size_t c = 0; c < k_; ++c) {
    if (counts[c] >= min_count) continue;
    const auto p = static_cast<std::size_t>(rng.below(l.count()));
    for (std::size_t j = 0; j < d_; ++j) {
      e[c * d_ + j] = data[l.offset(p, j)];
      sums[c * d_ + j] = e[c * d_ + j];
    }
    counts[c] = 1.0;
    ++replaced;
  }
  return replaced;
}

double Codebook::ema_residual() const {
  const auto e = embeddings.value.data();
  double worst = 0.0;
  for (std::size_t c = 0; c < k_; ++c)
    for (std::size_t j = 0; j < d_; ++j) {
      worst = std::max(worst, std::abs(e[c * d_ + j] * std::max(counts[c], epsilon_) - sums[c * d_ + j]));
    }
  return worst;
}

std::size_t nearest_code(const Codebook& cb, std::span<const double> v) {
  if (v.size() != cb.d()) throw ShapeError("vector length does not match code dimension");
  const auto e = cb.embeddings.value.data();
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cb.k(); ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < cb.d(); ++j) {
      const double diff = v[j] - e[c * cb.d() + j];
      s += diff * diff;
    }
    if (s < best_d) {  // strict: ties keep the lower index
      best_d = s;
      best = c;
    }
  }
  return best;
}

QuantizeResult quantize(const Tensor& z, const Codebook& cb) {
  const auto l = layout_of(z, cb.d());
  const auto data = z.data();
  QuantizeResult r;
  r.indices = IntMap(l.n, l.c, l.h, l.w);
  std::vector<double> v(l.d);
  for (std::size_t p = 0; p < l.count(); ++p) {
    for (std::size_t j = 0; j < l.d; ++j) v[j] = data[l.offset(p, j)];
    r.indices.values[p] = static_cast<std::int32_t>(nearest_code(cb, v));
  }
  const auto e = cb.embeddings.value.data();
  std::vector<double> q(data.size());
  for (std::size_t p = 0; p < l.count(); ++p) {
    const auto idx = static_cast<std::size_t>(r.indices.values[p]);
    for (std::size_t j = 0; j < l.d; ++j) q[l.offset(p, j)] = e[idx * l.d + j];
  }
  r.quantized = Tensor::make_result(
      "vq_lookup", z.shape(), std::move(q), {cb.embeddings.value},
      [l, idx = r.indices.values](std::span<const double> g, std::span<const std::span<double>> in) {
        for (std::size_t p = 0; p < l.count(); ++p) {
          const auto c = static_cast<std::size_t>(idx[p]);
          for (std::size_t j = 0; j < l.d; ++j) in[0][c * l.d + j] += g[l.offset(p, j)];
        }
      });
  r.commitment_loss = mse(z, r.quantized.detach());
  r.codebook_loss = mse(r.quantized, z.detach());
  r.perplexity = perplexity(r.indices.values, cb.k());
  return r;
}

Tensor straight_through(const Tensor& z, const QuantizeResult& q) { return straight_through(z, q.quantized); }

Tensor vq_loss(const Tensor& recon_nll, const QuantizeResult& q, const VQLossConfig& cfg) {
  if (cfg.beta < 0.0) throw ConfigError("commitment weight beta must be non-negative");
  Tensor loss = recon_nll;
  if (!cfg.use_ema_codebook) loss = add(loss, q.codebook_loss);
  if (cfg.beta > 0.0) loss = add(loss, scale(q.commitment_loss, cfg.beta));
  return loss;
}

void ema_update(Codebook& cb, const Tensor& z, const IntMap& indices) {
  if (!cb.use_ema()) throw ConfigError("ema_update on a codebook trained by gradient");
  const auto l = layout_of(z, cb.d());
  if (indices.values.size() != l.count()) throw ShapeError("ema_update: index map does not match z");
  const std::size_t k = cb.k(), d = cb.d();
  std::vector<double> count(k, 0.0), total(k * d, 0.0);
  const auto data = z.data();
  for (std::size_t p = 0; p < l.count(); ++p) {
    const auto c = static_cast<std::size_t>(indices.values[p]);
    if (c >= k) throw ValueError("ema_update: code index out of range");
    count[c] += 1.0;
    for (std::size_t j = 0; j < d; ++j) total[c * d + j] += data[l.offset(p, j)];
  }
  const double g = cb.gamma();
  auto e = cb.embeddings.value.mutable_data();
  for (std::size_t c = 0; c < k; ++c) {
    cb.counts[c] = g * cb.counts[c] + (1.0 - g) * count[c];
    const double denom = std::max(cb.counts[c], cb.epsilon());
    for (std::size_t j = 0; j < d; ++j) {
      auto& m = cb.sums[c * d + j];
      m = g * m + (1.0 - g) * total[c * d + j];
      e[c * d + j] = m / denom;
    }
  }
}

double perplexity(std::span<const std::int32_t> indices, std::size_t k) {
  if (indices.empty()) return 1.0;
  std::vector<double> hist(k, 0.0);
  for (auto i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= k) throw ValueError("perplexity: code index out of range");
    hist[static_cast<std::size_t>(i)] += 1.0;
  }
  const double n = static_cast<double>(indices.size());
  double h = 0.0;
  for (double c : hist) {
    if (c > 0) h -= (c / n) * std::log(c / n);
  }
  return std::clamp(std::exp(h), 1.0, static_cast<double>(k));
}

}  // namespace pixelstack
