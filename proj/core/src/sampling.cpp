// Inference engine shared by the naive and incremental samplers.
//
// The training path goes through the autodiff graph and an im2col GEMM whose
// summation order depends on the whole map. Sampling instead evaluates each
// output position with a fixed per-position kernel, so a value depends only
// on its receptive field and the two samplers agree bit for bit.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "pixelstack/error.hpp"
#include "pixelstack/pixelcnn.hpp"

namespace pixelstack {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Masked convolution repacked as [cout][tap][cin] over the open taps only.
struct PackedConv {
  std::size_t cin = 0, cout = 0, radius = 0;
  std::vector<std::array<int, 2>> taps;  // (dy, dx)
  std::vector<double> w;
  std::vector<double> b;
};

PackedConv pack(const Conv2d& conv) {
  PackedConv p;
  p.cout = conv.out_channels();
  p.cin = conv.in_channels();
  const std::size_t k = conv.kernel();
  p.radius = k / 2;
  const auto w = conv.weight.value.data();
  std::vector<double> m(w.size(), 1.0);
  if (conv.mask.defined()) std::copy(conv.mask.data().begin(), conv.mask.data().end(), m.begin());
  std::vector<std::array<std::size_t, 2>> open;
  for (std::size_t ky = 0; ky < k; ++ky)
    for (std::size_t kx = 0; kx < k; ++kx) {
      bool any = false;
      for (std::size_t o = 0; o < p.cout && !any; ++o)
        for (std::size_t i = 0; i < p.cin && !any; ++i) any = m[((o * p.cin + i) * k + ky) * k + kx] != 0.0;
      if (any) {
        open.push_back({ky, kx});
        p.taps.push_back({static_cast<int>(ky) - static_cast<int>(p.radius),
                          static_cast<int>(kx) - static_cast<int>(p.radius)});
      }
    }
  p.w.resize(p.cout * open.size() * p.cin);
  for (std::size_t o = 0; o < p.cout; ++o)
    for (std::size_t t = 0; t < open.size(); ++t)
      for (std::size_t i = 0; i < p.cin; ++i) {
        const auto src = ((o * p.cin + i) * k + open[t][0]) * k + open[t][1];
        p.w[(o * open.size() + t) * p.cin + i] = w[src] * m[src];
      }
  p.b.assign(conv.bias.value.data().begin(), conv.bias.value.data().end());
  return p;
}

/// Expands a bias tensor broadcastable to [N, C, H, W] into channels-last storage.
std::vector<double> channels_last(const Tensor& t, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  std::vector<double> out(n * h * w * c, 0.0);
  if (!t.defined()) return out;
  const auto& s = t.shape();
  if (s.size() != 4 || s[1] != c || (s[0] != n && s[0] != 1) || (s[2] != h && s[2] != 1) ||
      (s[3] != w && s[3] != 1)) {
    throw ShapeError("conditioning bias " + shape_string(s) + " does not broadcast to the sample geometry");
  }
  const auto d = t.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const auto src = ((std::min(b, s[0] - 1) * c + ch) * s[2] + std::min(y, s[2] - 1)) * s[3] +
                           std::min(x, s[3] - 1);
          out[((b * h + y) * w + x) * c + ch] = d[src];
        }
  return out;
}

class Engine final : public ActivationCache {
 public:
  Engine(const AutoregressiveNet& net, std::size_t n, std::size_t h, std::size_t w, const Conditioning& cond)
      : n_(n), h_(h), w_(w) {
    const auto& c = net.config();
    bins_ = c.bins;
    groups_ = c.groups;
    hidden_ = c.hidden;
    embed_ = pack(net.embedding());
    for (const auto& blk : net.blocks()) blocks_.push_back({pack(blk.conv_f), pack(blk.conv_g), pack(blk.proj)});
    head_ = pack(net.head());
    const auto biases = net.conditioning_biases(cond, n, h, w);
    for (const auto& b : biases) {
      cond_f_.push_back(channels_last(b.filter, n, hidden_, h, w));
      cond_g_.push_back(channels_last(b.gate, n, hidden_, h, w));
    }
    if (!blocks_.empty()) acts_.assign(blocks_.size() + 1, std::vector<double>(n * h * w * hidden_, 0.0));
    logits_.assign(n * h * w * bins_ * groups_, 0.0);
    unit_.resize(hidden_);
  }

  [[nodiscard]] std::size_t layers() const override { return acts_.size(); }

  [[nodiscard]] double activation(std::size_t layer, std::size_t item, std::size_t channel, std::size_t row,
                                  std::size_t col) const override {
    return acts_.at(layer)[((item * h_ + row) * w_ + col) * hidden_ + channel];
  }

  [[nodiscard]] double logit(std::size_t item, std::size_t bin, std::size_t group, std::size_t row,
                             std::size_t col) const override {
    return logits_[((item * h_ + row) * w_ + col) * bins_ * groups_ + bin * groups_ + group];
  }

  void full(const IntMap& x) {
    const Region all{0, h_ - 1, 0, w_ - 1};
    if (blocks_.empty()) {
      run_head(all);
      return;
    }
    run_embed(x, all);
    for (std::size_t b = 0; b < blocks_.size(); ++b) run_block(b, all);
    run_head(all);
  }

  /// Refreshes every buffer entry whose receptive field contains (row, col).
  void update(const IntMap& x, std::size_t row, std::size_t col) {
    if (blocks_.empty()) return;  // logits are constant
    std::size_t reach = embed_.radius;
    run_embed(x, around(row, col, reach));
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      reach += blocks_[b].f.radius;
      run_block(b, around(row, col, reach));
    }
    run_head(around(row, col, reach));
  }

 private:
  struct Region {
    std::size_t y0, y1, x0, x1;  // inclusive
  };
  struct Block {
    PackedConv f, g, proj;
  };

  [[nodiscard]] Region around(std::size_t row, std::size_t col, std::size_t reach) const {
    return {row, std::min(h_ - 1, row + reach), col >= reach ? col - reach : 0, std::min(w_ - 1, col + reach)};
  }

  [[nodiscard]] bool inside(std::size_t y, std::size_t x, const std::array<int, 2>& tap, std::size_t& sy,
                            std::size_t& sx) const {
    const auto yy = static_cast<std::ptrdiff_t>(y) + tap[0];
    const auto xx = static_cast<std::ptrdiff_t>(x) + tap[1];
    if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h_) || xx >= static_cast<std::ptrdiff_t>(w_)) {
      return false;
    }
    sy = static_cast<std::size_t>(yy);
    sx = static_cast<std::size_t>(xx);
    return true;
  }

  void run_embed(const IntMap& x, const Region& r) {
    const auto& p = embed_;
    const std::size_t ntaps = p.taps.size();
    auto& out = acts_[0];
    for (std::size_t n = 0; n < n_; ++n)
      for (std::size_t y = r.y0; y <= r.y1; ++y)
        for (std::size_t xx = r.x0; xx <= r.x1; ++xx) {
          double* dst = out.data() + ((n * h_ + y) * w_ + xx) * hidden_;
          for (std::size_t o = 0; o < p.cout; ++o) {
            double acc = p.b[o];
            for (std::size_t t = 0; t < ntaps; ++t) {
              std::size_t sy = 0, sx = 0;
              if (!inside(y, xx, p.taps[t], sy, sx)) continue;
              const double* wt = p.w.data() + (o * ntaps + t) * p.cin;
              for (std::size_t g = 0; g < groups_; ++g) {
                acc += wt[g * bins_ + static_cast<std::size_t>(x.at(n, g, sy, sx))];
              }
            }
            dst[o] = acc;
          }
        }
  }

  void gather(const std::vector<double>& src, const PackedConv& p, std::size_t n, std::size_t y, std::size_t x) {
    for (std::size_t t = 0; t < p.taps.size(); ++t) {
      double* dst = patch_.data() + t * hidden_;
      std::size_t sy = 0, sx = 0;
      if (inside(y, x, p.taps[t], sy, sx)) {
        const double* s = src.data() + ((n * h_ + sy) * w_ + sx) * hidden_;
        std::copy(s, s + hidden_, dst);
      } else {
        std::fill(dst, dst + hidden_, 0.0);
      }
    }
  }

  void run_block(std::size_t b, const Region& r) {
    const auto& blk = blocks_[b];
    const auto& in = acts_[b];
    auto& out = acts_[b + 1];
    const std::size_t len = blk.f.taps.size() * hidden_;
    if (blk.f.taps != blk.g.taps) throw GraphError("filter and gate masks differ");
    if (patch_.size() < len) patch_.resize(len);
    for (std::size_t n = 0; n < n_; ++n)
      for (std::size_t y = r.y0; y <= r.y1; ++y)
        for (std::size_t x = r.x0; x <= r.x1; ++x) {
          gather(in, blk.f, n, y, x);
          const std::size_t at = ((n * h_ + y) * w_ + x) * hidden_;
          for (std::size_t o = 0; o < hidden_; ++o) {
            const double f = blk.f.b[o] + dot(blk.f.w.data() + o * len, patch_.data(), len) + cond_f_[b][at + o];
            const double g = blk.g.b[o] + dot(blk.g.w.data() + o * len, patch_.data(), len) + cond_g_[b][at + o];
            unit_[o] = std::tanh(f) * stable_sigmoid(g);
          }
          for (std::size_t o = 0; o < hidden_; ++o) {
            out[at + o] = in[at + o] + (blk.proj.b[o] + dot(blk.proj.w.data() + o * hidden_, unit_.data(), hidden_));
          }
        }
  }

  void run_head(const Region& r) {
    const std::size_t co = bins_ * groups_;
    for (std::size_t n = 0; n < n_; ++n)
      for (std::size_t y = r.y0; y <= r.y1; ++y)
        for (std::size_t x = r.x0; x <= r.x1; ++x) {
          double* dst = logits_.data() + ((n * h_ + y) * w_ + x) * co;
          if (acts_.empty()) {
            std::copy(head_.b.begin(), head_.b.end(), dst);
            continue;
          }
          const double* src = acts_.back().data() + ((n * h_ + y) * w_ + x) * hidden_;
          for (std::size_t c = 0; c < hidden_; ++c) unit_[c] = std::max(src[c], 0.0);
          for (std::size_t o = 0; o < co; ++o) dst[o] = head_.b[o] + dot(head_.w.data() + o * hidden_, unit_.data(), hidden_);
        }
  }

  std::size_t n_, h_, w_;
  std::size_t bins_ = 0, groups_ = 0, hidden_ = 0;
  PackedConv embed_;
  std::vector<Block> blocks_;
  PackedConv head_;
  std::vector<std::vector<double>> cond_f_, cond_g_;
  std::vector<std::vector<double>> acts_;
  std::vector<double> logits_;
  std::vector<double> patch_, unit_;
};

IntMap run_sampler(const AutoregressiveNet& net, std::size_t n, std::size_t height, std::size_t width,
                   const Conditioning& cond, const SamplerConfig& cfg, bool incremental,
                   const SampleObserver& observer) {
  if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature)) {
    throw ValueError("sampling temperature must be positive, got " + std::to_string(cfg.temperature));
  }
  if (n == 0 || height == 0 || width == 0) throw ShapeError("sample: batch and map size must be positive");
  const auto& c = net.config();
  Engine engine(net, n, height, width, cond);
  IntMap x(n, c.groups, height, width);
  engine.full(x);
  Rng rng(cfg.seed);
  std::vector<double> logits(c.bins);
  const RasterOrder order{height, width, c.groups};
  for (std::size_t t = 0; t < order.size(); ++t) {
    const auto p = order.position(t);
    for (std::size_t item = 0; item < n; ++item) {
      for (std::size_t b = 0; b < c.bins; ++b) logits[b] = engine.logit(item, b, p.group, p.row, p.col);
      x.at(item, p.group, p.row, p.col) = static_cast<std::int32_t>(draw_categorical(logits, cfg.temperature, rng.uniform()));
    }
    if (incremental) {
      engine.update(x, p.row, p.col);
    } else {
      engine.full(x);
    }
    if (observer) observer(t, x, engine);
  }
  return x;
}

}  // namespace

std::size_t draw_categorical(std::span<const double> logits, double temperature, double u) {
  if (logits.empty()) throw ValueError("draw_categorical: no classes");
  if (!(temperature > 0.0)) throw ValueError("draw_categorical: temperature must be positive");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    // (l - max) / T keeps the argmax at exp(0) even as T -> 0.
    p[i] = std::exp((logits[i] - m) / temperature);
    total += p[i];
  }
  const double target = u * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = i;
    if (target < acc) return i;
  }
  return last;
}

IntMap sample(const AutoregressiveNet& net, std::size_t n, std::size_t height, std::size_t width,
              const Conditioning& cond, const SamplerConfig& cfg) {
  return cfg.mode == SamplerMode::naive ? sample_naive(net, n, height, width, cond, cfg)
                                        : sample_incremental(net, n, height, width, cond, cfg);
}

IntMap sample_naive(const AutoregressiveNet& net, std::size_t n, std::size_t height, std::size_t width,
                    const Conditioning& cond, const SamplerConfig& cfg, const SampleObserver& observer) {
  return run_sampler(net, n, height, width, cond, cfg, false, observer);
}

IntMap sample_incremental(const AutoregressiveNet& net, std::size_t n, std::size_t height, std::size_t width,
                          const Conditioning& cond, const SamplerConfig& cfg, const SampleObserver& observer) {
  return run_sampler(net, n, height, width, cond, cfg, true, observer);
}

}  // namespace pixelstack
