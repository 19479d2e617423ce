#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

#include "pixelstack/error.hpp"
#include "pixelstack/parallel.hpp"
#include "pixelstack/stats.hpp"

using namespace pixelstack;

TEST(Stats, MeanAndSampleStdev) {
  EXPECT_DOUBLE_EQ(mean({1, 2, 3, 4}), 2.5);
  EXPECT_NEAR(stdev({2, 4, 4, 4, 5, 5, 7, 9}), std::sqrt(32.0 / 7.0), 1e-12);
  EXPECT_EQ(stdev({3}), 0.0);
}

TEST(Stats, RanksAverageTies) {
  EXPECT_EQ(ranks({10, 30, 20, 20}), (std::vector<double>{1, 4, 2.5, 2.5}));
}

TEST(Stats, SpearmanAgainstClosedForm) {
  // Without ties: 1 - 6 sum d^2 / (n (n^2 - 1)).
  const std::vector<double> a = {1, 2, 3, 4, 5}, b = {2, 1, 4, 3, 5};
  const double d2 = 1 + 1 + 1 + 1 + 0;
  EXPECT_NEAR(spearman(a, b), 1.0 - 6.0 * d2 / (5.0 * 24.0), 1e-12);
  EXPECT_NEAR(spearman(a, {5, 4, 3, 2, 1}), -1.0, 1e-12);
  EXPECT_EQ(spearman(a, {1, 1, 1, 1, 1}), 0.0);
  EXPECT_NEAR(spearman({1, 2, 3}, {1, 8, 27}), 1.0, 1e-12);
}

TEST(Stats, TrendCheck) {
  auto up = check_trend({1.0, 1.5, 2.0, 2.0}, Trend::non_decreasing);
  EXPECT_TRUE(up.monotone);
  EXPECT_TRUE(up.passed);
  EXPECT_GT(up.rho, 0.9);
  auto bump = check_trend({1.0, 3.0, 2.0, 4.0}, Trend::non_decreasing);
  EXPECT_FALSE(bump.monotone);
  EXPECT_FALSE(bump.passed);
  auto down = check_trend({3.0, 2.0, 1.0}, Trend::non_increasing);
  EXPECT_TRUE(down.passed);
  EXPECT_FALSE(check_trend({3.0, 2.0, 1.0}, Trend::non_decreasing).passed);
  EXPECT_FALSE(check_trend({1.0, 1.0, 1.0}, Trend::non_decreasing).passed);  // rho = 0
  EXPECT_THROW((void)check_trend({1.0, 2.0}, Trend::non_decreasing), ValueError);
}

TEST(Stats, EntropyAndPerplexity) {
  EXPECT_NEAR(entropy_bits({5, 5, 5, 5}), 2.0, 1e-12);
  EXPECT_NEAR(histogram_perplexity({5, 5, 5, 5}), 4.0, 1e-12);
  EXPECT_NEAR(histogram_perplexity({7, 0, 0}), 1.0, 1e-12);
  EXPECT_EQ(histogram_perplexity({}), 1.0);
}

TEST(Parallel, CoversEveryIndexOnceAndRethrows) {
  std::vector<std::atomic<int>> hits(257);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 3) throw ValueError("boom");
               }),
               ValueError);
  EXPECT_GE(worker_count(), 1u);
}
