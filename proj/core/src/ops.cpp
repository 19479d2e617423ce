#include "pixelstack/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pixelstack/error.hpp"

namespace pixelstack {

namespace {

/// Per-element input offsets for a numpy-style broadcast of two shapes.
struct Broadcast {
  Shape shape;
  std::vector<std::size_t> a_offset;
  std::vector<std::size_t> b_offset;
  bool same = false;
};

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast out;
  if (a == b) {
    out.shape = a;
    out.same = true;
    return out;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  out.shape.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw ShapeError(std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) +
                       " do not broadcast");
    }
    out.shape[i] = std::max(pa[i], pb[i]);
  }
  // Strides with zero on broadcast axes.
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  std::size_t ta = 1, tb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : ta;
    sb[i] = pb[i] == 1 ? 0 : tb;
    ta *= pa[i];
    tb *= pb[i];
  }
  const std::size_t total = shape_numel(out.shape);
  out.a_offset.resize(total);
  out.b_offset.resize(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    out.a_offset[flat] = oa;
    out.b_offset[flat] = ob;
    for (std::size_t i = rank; i-- > 0;) {
      ++idx[i];
      oa += sa[i];
      ob += sb[i];
      if (idx[i] < out.shape[i]) break;
      oa -= sa[i] * idx[i];
      ob -= sb[i] * idx[i];
      idx[i] = 0;
    }
  }
  return out;
}

enum class BinaryKind { add, sub, mul };

Tensor binary(BinaryKind kind, const Tensor& a, const Tensor& b, const char* op) {
  auto bc = std::make_shared<Broadcast>(broadcast(a.shape(), b.shape(), op));
  const auto da = a.data();
  const auto db = b.data();
  const std::size_t total = shape_numel(bc->shape);
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) {
    const double x = da[bc->same ? i : bc->a_offset[i]];
    const double y = db[bc->same ? i : bc->b_offset[i]];
    switch (kind) {
      case BinaryKind::add: out[i] = x + y; break;
      case BinaryKind::sub: out[i] = x - y; break;
      case BinaryKind::mul: out[i] = x * y; break;
    }
  }
  return Tensor::make_result(
      op, bc->shape, std::move(out), {a, b},
      [kind, bc, a, b](std::span<const double> g, std::span<const std::span<double>> in) {
        const std::size_t total = g.size();
        const auto da = a.data();
        const auto db = b.data();
        for (std::size_t i = 0; i < total; ++i) {
          const std::size_t ia = bc->same ? i : bc->a_offset[i];
          const std::size_t ib = bc->same ? i : bc->b_offset[i];
          switch (kind) {
            case BinaryKind::add:
              if (!in[0].empty()) in[0][ia] += g[i];
              if (!in[1].empty()) in[1][ib] += g[i];
              break;
            case BinaryKind::sub:
              if (!in[0].empty()) in[0][ia] += g[i];
              if (!in[1].empty()) in[1][ib] -= g[i];
              break;
            case BinaryKind::mul:
              if (!in[0].empty()) in[0][ia] += g[i] * db[ib];
              if (!in[1].empty()) in[1][ib] += g[i] * da[ia];
              break;
          }
        }
      });
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t classes = 1;
  std::size_t inner = 1;
  [[nodiscard]] std::size_t positions() const { return outer * inner; }
  [[nodiscard]] std::size_t offset(std::size_t pos, std::size_t k) const {
    const std::size_t o = pos / inner;
    const std::size_t i = pos % inner;
    return (o * classes + k) * inner + i;
  }
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.classes = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

/// log-softmax of one position, written to `out` (length classes).
void log_softmax_at(std::span<const double> logits, const AxisSplit& s, std::size_t pos,
                    double* out) {
  double mx = -INFINITY;
  for (std::size_t k = 0; k < s.classes; ++k) mx = std::max(mx, logits[s.offset(pos, k)]);
  double acc = 0.0;
  for (std::size_t k = 0; k < s.classes; ++k) acc += std::exp(logits[s.offset(pos, k)] - mx);
  const double lse = mx + std::log(acc);
  for (std::size_t k = 0; k < s.classes; ++k) out[k] = logits[s.offset(pos, k)] - lse;
}

Tensor cross_entropy_impl(const Tensor& logits, std::span<const std::int32_t> targets,
                          std::size_t axis, std::span<const std::uint8_t> mask, const char* op) {
  const auto s = split_axis(logits.shape(), axis, op);
  if (targets.size() != s.positions()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(s.positions()) + " positions");
  }
  if (!mask.empty() && mask.size() != s.positions()) {
    throw ShapeError(std::string(op) + ": position mask length mismatch");
  }
  std::size_t count = 0;
  for (std::size_t p = 0; p < s.positions(); ++p) {
    if (!mask.empty() && !mask[p]) continue;
    if (targets[p] < 0 || static_cast<std::size_t>(targets[p]) >= s.classes) {
      throw ValueError(std::string(op) + ": target " + std::to_string(targets[p]) +
                       " at position " + std::to_string(p) + " outside [0, " +
                       std::to_string(s.classes) + ")");
    }
    ++count;
  }
  if (count == 0) throw ValueError(std::string(op) + ": no positions selected");

  const auto x = logits.data();
  std::vector<double> lp(s.classes);
  double total = 0.0;
  for (std::size_t p = 0; p < s.positions(); ++p) {
    if (!mask.empty() && !mask[p]) continue;
    log_softmax_at(x, s, p, lp.data());
    total -= lp[static_cast<std::size_t>(targets[p])];
  }
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  return Tensor::make_result(
      op, Shape{1}, {total * inv}, {logits},
      [s, inv, logits, tgt = std::move(tgt), msk = std::move(msk)](
          std::span<const double> g, std::span<const std::span<double>> in) {
        if (in[0].empty()) return;
        const auto x = logits.data();
        std::vector<double> lp(s.classes);
        for (std::size_t p = 0; p < s.positions(); ++p) {
          if (!msk.empty() && !msk[p]) continue;
          log_softmax_at(x, s, p, lp.data());
          for (std::size_t k = 0; k < s.classes; ++k) {
            double d = std::exp(lp[k]);
            if (static_cast<std::int32_t>(k) == tgt[p]) d -= 1.0;
            in[0][s.offset(p, k)] += g[0] * d * inv;
          }
        }
      });
}

}  // namespace

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b) {
  switch (kind) {
    case ElementwiseKind::relu: return relu(a);
    case ElementwiseKind::tanh: return tanh(a);
    case ElementwiseKind::sigmoid: return sigmoid(a);
    case ElementwiseKind::add: return add(a, b);
    case ElementwiseKind::mul: return mul(a, b);
  }
  throw ValueError("unknown elementwise kind");
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryKind::add, a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryKind::sub, a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryKind::mul, a, b, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  return Tensor::make_result("scale", a.shape(), std::move(out), {a},
                             [factor](std::span<const double> g, std::span<const std::span<double>> in) {
                               for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i] * factor;
                             });
}

Tensor relu(const Tensor& x) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return Tensor::make_result("relu", x.shape(), std::move(out), {x},
                             [x](std::span<const double> g, std::span<const std::span<double>> in) {
                               const auto v = x.data();
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 if (v[i] > 0.0) in[0][i] += g[i];
                               }
                             });
}

Tensor tanh(const Tensor& x) {
  const auto v = x.data();
  auto out = std::make_shared<std::vector<double>>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) (*out)[i] = std::tanh(v[i]);
  std::vector<double> copy = *out;
  return Tensor::make_result("tanh", x.shape(), std::move(copy), {x},
                             [out](std::span<const double> g, std::span<const std::span<double>> in) {
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 const double y = (*out)[i];
                                 in[0][i] += g[i] * (1.0 - y * y);
                               }
                             });
}

Tensor sigmoid(const Tensor& x) {
  const auto v = x.data();
  auto out = std::make_shared<std::vector<double>>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    // Stable in both tails.
    (*out)[i] = v[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-v[i])) : std::exp(v[i]) / (1.0 + std::exp(v[i]));
  }
  std::vector<double> copy = *out;
  return Tensor::make_result("sigmoid", x.shape(), std::move(copy), {x},
                             [out](std::span<const double> g, std::span<const std::span<double>> in) {
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 const double y = (*out)[i];
                                 in[0][i] += g[i] * y * (1.0 - y);
                               }
                             });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::make_result("sum", Shape{1}, {acc}, {x},
                             [](std::span<const double> g, std::span<const std::span<double>> in) {
                               for (auto& v : in[0]) v += g[0];
                             });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::make_result("mean", Shape{1}, {acc / n}, {x},
                             [n](std::span<const double> g, std::span<const std::span<double>> in) {
                               for (auto& v : in[0]) v += g[0] / n;
                             });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  const auto v = x.data();
  return Tensor::make_result("reshape", std::move(shape), std::vector<double>(v.begin(), v.end()), {x},
                             [](std::span<const double> g, std::span<const std::span<double>> in) {
                               for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
                             });
}

Tensor subpixel_upsample(const Tensor& x, std::size_t r) {
  if (x.rank() != 4) throw ShapeError("subpixel_upsample expects NCHW, got " + shape_string(x.shape()));
  if (r == 0) throw ValueError("subpixel_upsample: factor must be positive");
  const auto& s = x.shape();
  const std::size_t n = s[0], cin = s[1], h = s[2], w = s[3];
  if (cin % (r * r) != 0) {
    throw ShapeError("subpixel_upsample: " + std::to_string(cin) + " channels not divisible by r^2=" +
                     std::to_string(r * r));
  }
  const std::size_t c = cin / (r * r);
  const std::size_t oh = h * r, ow = w * r;
  // map[out_flat] = in_flat
  auto map = std::make_shared<std::vector<std::size_t>>(x.numel());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::size_t dy = oy % r, dx = ox % r;
          const std::size_t ic = ch * r * r + dy * r + dx;
          const std::size_t out = ((b * c + ch) * oh + oy) * ow + ox;
          (*map)[out] = ((b * cin + ic) * h + oy / r) * w + ox / r;
        }
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[(*map)[i]];
  return Tensor::make_result("subpixel_upsample", Shape{n, c, oh, ow}, std::move(out), {x},
                             [map](std::span<const double> g, std::span<const std::span<double>> in) {
                               for (std::size_t i = 0; i < g.size(); ++i) in[0][(*map)[i]] += g[i];
                             });
}

Tensor space_to_depth(const Tensor& x, std::size_t r) {
  if (x.rank() != 4) throw ShapeError("space_to_depth expects NCHW, got " + shape_string(x.shape()));
  if (r == 0) throw ValueError("space_to_depth: factor must be positive");
  const auto& s = x.shape();
  const std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (h % r != 0 || w % r != 0) {
    throw ShapeError("space_to_depth: spatial size " + shape_string(s) + " not divisible by " +
                     std::to_string(r));
  }
  const std::size_t oh = h / r, ow = w / r, oc = c * r * r;
  auto map = std::make_shared<std::vector<std::size_t>>(x.numel());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < oc; ++ch)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::size_t base = ch / (r * r);
          const std::size_t dy = (ch % (r * r)) / r, dx = ch % r;
          const std::size_t out = ((b * oc + ch) * oh + oy) * ow + ox;
          (*map)[out] = ((b * c + base) * h + oy * r + dy) * w + ox * r + dx;
        }
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[(*map)[i]];
  return Tensor::make_result("space_to_depth", Shape{n, oc, oh, ow}, std::move(out), {x},
                             [map](std::span<const double> g, std::span<const std::span<double>> in) {
                               for (std::size_t i = 0; i < g.size(); ++i) in[0][(*map)[i]] += g[i];
                             });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                             std::size_t axis) {
  return cross_entropy_impl(logits, targets, axis, {}, "softmax_cross_entropy");
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets) {
  return softmax_cross_entropy(logits, targets, logits.rank() - 1);
}

Tensor masked_softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                                    std::size_t axis, std::span<const std::uint8_t> position_mask) {
  if (position_mask.empty()) throw ValueError("masked_softmax_cross_entropy: empty mask");
  return cross_entropy_impl(logits, targets, axis, position_mask, "masked_softmax_cross_entropy");
}

Tensor softmax(const Tensor& logits, std::size_t axis) {
  const auto s = split_axis(logits.shape(), axis, "softmax");
  const auto x = logits.data();
  auto out = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> lp(s.classes);
  for (std::size_t p = 0; p < s.positions(); ++p) {
    log_softmax_at(x, s, p, lp.data());
    for (std::size_t k = 0; k < s.classes; ++k) (*out)[s.offset(p, k)] = std::exp(lp[k]);
  }
  std::vector<double> copy = *out;
  return Tensor::make_result(
      "softmax", logits.shape(), std::move(copy), {logits},
      [s, out](std::span<const double> g, std::span<const std::span<double>> in) {
        for (std::size_t p = 0; p < s.positions(); ++p) {
          double dot = 0.0;
          for (std::size_t k = 0; k < s.classes; ++k) {
            const auto o = s.offset(p, k);
            dot += g[o] * (*out)[o];
          }
          for (std::size_t k = 0; k < s.classes; ++k) {
            const auto o = s.offset(p, k);
            in[0][o] += (*out)[o] * (g[o] - dot);
          }
        }
      });
}

Tensor log_softmax(const Tensor& logits, std::size_t axis) {
  const auto s = split_axis(logits.shape(), axis, "log_softmax");
  const auto x = logits.data();
  auto out = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> lp(s.classes);
  for (std::size_t p = 0; p < s.positions(); ++p) {
    log_softmax_at(x, s, p, lp.data());
    for (std::size_t k = 0; k < s.classes; ++k) (*out)[s.offset(p, k)] = lp[k];
  }
  std::vector<double> copy = *out;
  return Tensor::make_result(
      "log_softmax", logits.shape(), std::move(copy), {logits},
      [s, out](std::span<const double> g, std::span<const std::span<double>> in) {
        for (std::size_t p = 0; p < s.positions(); ++p) {
          double gsum = 0.0;
          for (std::size_t k = 0; k < s.classes; ++k) gsum += g[s.offset(p, k)];
          for (std::size_t k = 0; k < s.classes; ++k) {
            const auto o = s.offset(p, k);
            in[0][o] += g[o] - std::exp((*out)[o]) * gsum;
          }
        }
      });
}

Tensor kl_divergence_with_logits(const Tensor& target_probs, const Tensor& logits, std::size_t axis,
                                 std::span<const std::uint8_t> position_mask) {
  if (target_probs.shape() != logits.shape()) {
    throw ShapeError("kl_divergence_with_logits: target " + shape_string(target_probs.shape()) +
                     " vs logits " + shape_string(logits.shape()));
  }
  const auto s = split_axis(logits.shape(), axis, "kl_divergence_with_logits");
  if (position_mask.size() != s.positions()) {
    throw ShapeError("kl_divergence_with_logits: position mask length mismatch");
  }
  std::size_t count = 0;
  for (auto m : position_mask) count += m ? 1 : 0;
  if (count == 0) throw ValueError("kl_divergence_with_logits: no positions selected");

  constexpr double floor = 1e-12;
  const auto t = target_probs.data();
  const auto x = logits.data();
  std::vector<double> lp(s.classes);
  double total = 0.0;
  for (std::size_t p = 0; p < s.positions(); ++p) {
    if (!position_mask[p]) continue;
    log_softmax_at(x, s, p, lp.data());
    for (std::size_t k = 0; k < s.classes; ++k) {
      const double tk = t[s.offset(p, k)];
      if (tk > 0.0) total += tk * (std::log(std::max(tk, floor)) - lp[k]);
    }
  }
  const double inv = 1.0 / static_cast<double>(count);
  const Tensor target = target_probs.detach();
  std::vector<std::uint8_t> msk(position_mask.begin(), position_mask.end());
  return Tensor::make_result(
      "kl_divergence_with_logits", Shape{1}, {total * inv}, {logits},
      [s, inv, target, logits, msk = std::move(msk)](std::span<const double> g,
                                                     std::span<const std::span<double>> in) {
        const auto t = target.data();
        const auto x = logits.data();
        std::vector<double> lp(s.classes);
        for (std::size_t p = 0; p < s.positions(); ++p) {
          if (!msk[p]) continue;
          log_softmax_at(x, s, p, lp.data());
          double tsum = 0.0;
          for (std::size_t k = 0; k < s.classes; ++k) tsum += t[s.offset(p, k)];
          for (std::size_t k = 0; k < s.classes; ++k) {
            const auto o = s.offset(p, k);
            in[0][o] += g[0] * inv * (std::exp(lp[k]) * tsum - t[o]);
          }
        }
      });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                     " differ");
  }
  const auto da = a.data();
  const auto db = b.data();
  const double n = static_cast<double>(da.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    acc += d * d;
  }
  return Tensor::make_result("mse", Shape{1}, {acc / n}, {a, b},
                             [a, b, n](std::span<const double> g, std::span<const std::span<double>> in) {
                               const auto da = a.data();
                               const auto db = b.data();
                               for (std::size_t i = 0; i < da.size(); ++i) {
                                 const double d = 2.0 * (da[i] - db[i]) / n * g[0];
                                 if (!in[0].empty()) in[0][i] += d;
                                 if (!in[1].empty()) in[1][i] -= d;
                               }
                             });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> indices) {
  if (table.rank() != 2) throw ShapeError("gather_rows expects a [K, D] table");
  const std::size_t k = table.dim(0), d = table.dim(1);
  for (auto i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= k) {
      throw ValueError("gather_rows: index " + std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  if (indices.empty()) throw ShapeError("gather_rows: no indices");
  const auto t = table.data();
  std::vector<double> out(indices.size() * d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy_n(t.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(indices[r]) * d),
                d, out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  std::vector<std::int32_t> idx(indices.begin(), indices.end());
  return Tensor::make_result("gather_rows", Shape{indices.size(), d}, std::move(out), {table},
                             [d, idx = std::move(idx)](std::span<const double> g,
                                                       std::span<const std::span<double>> in) {
                               for (std::size_t r = 0; r < idx.size(); ++r) {
                                 const std::size_t base = static_cast<std::size_t>(idx[r]) * d;
                                 for (std::size_t j = 0; j < d; ++j) in[0][base + j] += g[r * d + j];
                               }
                             });
}

Tensor gather_nchw(const Tensor& table, std::span<const std::int32_t> indices, std::size_t n,
                   std::size_t h, std::size_t w) {
  if (table.rank() != 2) throw ShapeError("gather_nchw expects a [K, D] table");
  if (indices.size() != n * h * w) throw ShapeError("gather_nchw: index count does not match N*H*W");
  const std::size_t k = table.dim(0), d = table.dim(1);
  for (auto i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= k) {
      throw ValueError("gather_nchw: index " + std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  const auto t = table.data();
  const std::size_t hw = h * w;
  std::vector<double> out(n * d * hw);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < hw; ++p) {
      const auto row = static_cast<std::size_t>(indices[b * hw + p]) * d;
      for (std::size_t j = 0; j < d; ++j) out[(b * d + j) * hw + p] = t[row + j];
    }
  std::vector<std::int32_t> idx(indices.begin(), indices.end());
  return Tensor::make_result("gather_nchw", Shape{n, d, h, w}, std::move(out), {table},
                             [n, d, hw, idx = std::move(idx)](std::span<const double> g,
                                                              std::span<const std::span<double>> in) {
                               for (std::size_t b = 0; b < n; ++b)
                                 for (std::size_t p = 0; p < hw; ++p) {
                                   const auto row = static_cast<std::size_t>(idx[b * hw + p]) * d;
                                   for (std::size_t j = 0; j < d; ++j) in[0][row + j] += g[(b * d + j) * hw + p];
                                 }
                             });
}

Tensor straight_through(const Tensor& z, const Tensor& quantized) {
  if (z.shape() != quantized.shape()) {
    throw ShapeError("straight_through: " + shape_string(z.shape()) + " vs " +
                     shape_string(quantized.shape()));
  }
  const auto q = quantized.data();
  return Tensor::make_result("straight_through", z.shape(), std::vector<double>(q.begin(), q.end()), {z},
                             [](std::span<const double> g, std::span<const std::span<double>> in) {
                               for (std::size_t i = 0; i < g.size(); ++i) in[0][i] += g[i];
                             });
}

Tensor one_hot_nchw(std::span<const std::int32_t> values, std::size_t n, std::size_t groups,
                    std::size_t h, std::size_t w, std::size_t bins, std::span<const std::uint8_t> keep) {
  const std::size_t hw = h * w;
  if (values.size() != n * groups * hw) throw ShapeError("one_hot_nchw: value count does not match N*G*H*W");
  if (!keep.empty() && keep.size() != n * hw) throw ShapeError("one_hot_nchw: keep mask length mismatch");
  std::vector<double> out(n * groups * bins * hw, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t p = 0; p < hw; ++p) {
        const auto v = values[(b * groups + g) * hw + p];
        if (v < 0 || static_cast<std::size_t>(v) >= bins) {
          throw ValueError("one_hot_nchw: value " + std::to_string(v) + " outside [0, " +
                           std::to_string(bins) + ")");
        }
        if (!keep.empty() && !keep[b * hw + p]) continue;
        out[((b * groups + g) * bins + static_cast<std::size_t>(v)) * hw + p] = 1.0;
      }
  return Tensor::from_data(Shape{n, groups * bins, h, w}, std::move(out));
}

}  // namespace pixelstack
