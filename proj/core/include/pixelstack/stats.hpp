#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace pixelstack {

[[nodiscard]] double mean(const std::vector<double>& v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
[[nodiscard]] double stdev(const std::vector<double>& v);

/// Average ranks, 1-based; ties share the mean of their positions.
[[nodiscard]] std::vector<double> ranks(const std::vector<double>& v);

/// Spearman rank correlation (Pearson on average ranks). Returns 0 when
/// either side is constant.
[[nodiscard]] double spearman(const std::vector<double>& a, const std::vector<double>& b);

enum class Trend { non_decreasing, non_increasing };

struct TrendCheck {
  bool monotone = false;
  double rho = 0.0;  // Spearman of values against their position
  bool passed = false;
};

/// Monotone in the requested direction and |rho| >= min_rho with the right
/// sign. Needs at least three values.
[[nodiscard]] TrendCheck check_trend(const std::vector<double>& values, Trend trend, double min_rho = 0.9);

/// Empirical entropy of a histogram, in bits.
[[nodiscard]] double entropy_bits(const std::vector<std::size_t>& counts);

/// exp(entropy) of a histogram of symbol counts; 1 for an empty histogram.
[[nodiscard]] double histogram_perplexity(const std::vector<std::size_t>& counts);

}  // namespace pixelstack
