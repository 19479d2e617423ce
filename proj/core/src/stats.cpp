#include "pixelstack/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pixelstack/error.hpp"

namespace pixelstack {

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stdev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("spearman: sequences differ in length");
  if (a.size() < 2) return 0.0;
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = mean(ra), mb = mean(rb);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

TrendCheck check_trend(const std::vector<double>& values, Trend trend, double min_rho) {
  if (values.size() < 3) throw ValueError("trend needs at least 3 values, got " + std::to_string(values.size()));
  TrendCheck out;
  out.monotone = true;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const bool ok = trend == Trend::non_decreasing ? values[i] >= values[i - 1] : values[i] <= values[i - 1];
    out.monotone = out.monotone && ok;
  }
  std::vector<double> pos(values.size());
  std::iota(pos.begin(), pos.end(), 0.0);
  out.rho = spearman(pos, values);
  const double signed_rho = trend == Trend::non_decreasing ? out.rho : -out.rho;
  out.passed = out.monotone && signed_rho >= min_rho;
  return out;
}

double entropy_bits(const std::vector<std::size_t>& counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  if (total == 0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

double histogram_perplexity(const std::vector<std::size_t>& counts) {
  return std::exp2(entropy_bits(counts));
}

}  // namespace pixelstack
