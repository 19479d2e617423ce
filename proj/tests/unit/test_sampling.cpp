#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <map>

#include "pixelstack/error.hpp"
#include "pixelstack/pixelcnn.hpp"
#include "test_util.hpp"

using namespace pixelstack;

namespace {

PixelCNNConfig config(std::size_t groups, std::size_t layers, std::size_t classes = 0) {
  PixelCNNConfig c;
  c.layers = layers;
  c.hidden = 4 * groups;
  c.bins = 5;
  c.groups = groups;
  c.classes = classes;
  return c;
}

}  // namespace

TEST(DrawCategorical, InverseCdfBoundaries) {
  const std::vector<double> logits = {0.0, 0.0, 0.0, 0.0};
  EXPECT_EQ(draw_categorical(logits, 1.0, 0.0), 0u);
  EXPECT_EQ(draw_categorical(logits, 1.0, 0.24), 0u);
  EXPECT_EQ(draw_categorical(logits, 1.0, 0.26), 1u);
  EXPECT_EQ(draw_categorical(logits, 1.0, 0.999999), 3u);
  EXPECT_THROW((void)draw_categorical(logits, 0.0, 0.5), ValueError);
}

TEST(DrawCategorical, LowTemperatureIsArgmax) {
  const std::vector<double> logits = {0.1, 2.0, 1.9};
  for (double u : {0.0, 0.5, 0.999}) EXPECT_EQ(draw_categorical(logits, 1e-4, u), 1u);
}

class TemperatureHistogram : public ::testing::TestWithParam<double> {};

TEST_P(TemperatureHistogram, WithinThreeSigmaOfSoftmax) {
  const double T = GetParam();
  const std::vector<double> logits = {1.0, 0.0, -1.0, 0.5};
  Rng rng(3);
  std::vector<double> counts(4, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[draw_categorical(logits, T, rng.uniform())] += 1.0;
  double z = 0.0;
  for (double l : logits) z += std::exp(l / T);
  for (std::size_t i = 0; i < 4; ++i) {
    const double p = std::exp(logits[i] / T) / z;
    EXPECT_NEAR(counts[i], n * p, 3.0 * std::sqrt(n * p * (1 - p))) << "bin " << i;
  }
}

INSTANTIATE_TEST_SUITE_P(Temperatures, TemperatureHistogram, ::testing::Values(0.5, 1.0, 2.0),
                         [](const auto& info) { return "t" + std::to_string(static_cast<int>(info.param * 10)); });

TEST(DrawCategorical, EqualLogitsGiveHalfEach) {
  const std::vector<double> logits = {0.0, 0.0};
  Rng rng(4);
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += static_cast<int>(draw_categorical(logits, 3.0, rng.uniform()));
  EXPECT_NEAR(ones, n / 2, 3.0 * std::sqrt(n * 0.25));
}

struct SamplerCase {
  std::size_t groups, layers, h, w;
};

class SamplerEquivalence : public ::testing::TestWithParam<SamplerCase> {};

TEST_P(SamplerEquivalence, IncrementalEqualsNaive) {
  const auto p = GetParam();
  Rng rng(17);
  AutoregressiveNet net(config(p.groups, p.layers), rng);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SamplerConfig cfg{0.9, seed, SamplerMode::naive};
    auto a = sample_naive(net, 2, p.h, p.w, {}, cfg);
    auto b = sample_incremental(net, 2, p.h, p.w, {}, cfg);
    EXPECT_EQ(a, b) << "seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, SamplerEquivalence,
                         ::testing::Values(SamplerCase{1, 0, 3, 3}, SamplerCase{1, 3, 6, 5}, SamplerCase{3, 2, 4, 4},
                                           SamplerCase{1, 5, 7, 3}),
                         [](const auto& info) {
                           const auto& c = info.param;
                           return "g" + std::to_string(c.groups) + "_l" + std::to_string(c.layers) + "_" +
                                  std::to_string(c.h) + "x" + std::to_string(c.w);
                         });

TEST(Sampler, ActivationsMatchFullForwardAtEveryStep) {
  Rng rng(18);
  AutoregressiveNet net(config(1, 3), rng);
  SamplerConfig cfg{1.0, 4, SamplerMode::incremental};
  double worst = 0.0;
  (void)sample_incremental(net, 1, 5, 5, {}, cfg, [&](std::size_t t, const IntMap& partial, const ActivationCache& c) {
    if (t % 4 != 0) return;
    ForwardTrace trace;
    auto logits = net.forward(partial, {}, &trace);
    ASSERT_EQ(trace.activations.size(), c.layers());
    for (std::size_t l = 0; l < c.layers(); ++l) {
      const auto& act = trace.activations[l];
      const auto C = act.dim(1);
      for (std::size_t ch = 0; ch < C; ++ch)
        for (std::size_t y = 0; y < 5; ++y)
          for (std::size_t x = 0; x < 5; ++x)
            worst = std::max(worst, std::abs(act.data()[(ch * 5 + y) * 5 + x] - c.activation(l, 0, ch, y, x)));
    }
    for (std::size_t b = 0; b < 5; ++b)
      for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t x = 0; x < 5; ++x)
          worst = std::max(worst, std::abs(logits.data()[(b * 5 + y) * 5 + x] - c.logit(0, b, 0, y, x)));
  });
  EXPECT_LT(worst, 1e-10);
}

TEST(Sampler, SeedDeterminismAndBatchIndependenceOfSeed) {
  Rng rng(19);
  AutoregressiveNet net(config(1, 2), rng);
  SamplerConfig cfg{1.0, 42, SamplerMode::incremental};
  EXPECT_EQ(sample(net, 3, 4, 4, {}, cfg), sample(net, 3, 4, 4, {}, cfg));
  cfg.seed = 43;
  auto other = sample(net, 3, 4, 4, {}, cfg);
  cfg.seed = 42;
  EXPECT_NE(sample(net, 3, 4, 4, {}, cfg), other);
}

TEST(Sampler, UniformNetSamplesUniformly) {
  Rng rng(20);
  AutoregressiveNet net(config(1, 0), rng);
  auto s = sample(net, 50, 8, 8, {}, SamplerConfig{1.0, 5});
  std::map<int, int> hist;
  for (auto v : s.values) hist[v]++;
  ASSERT_EQ(hist.size(), 5u);
  for (auto [v, c] : hist) EXPECT_NEAR(c / 3200.0, 0.2, 0.03);
}

TEST(Sampler, ClassConditionalSamplingUsesLabels) {
  Rng rng(21);
  AutoregressiveNet net(config(1, 2, 2), rng);
  Conditioning cond;
  cond.labels = {0, 1};
  EXPECT_NO_THROW((void)sample(net, 2, 3, 3, cond, {}));
  cond.labels = {0, 2};
  EXPECT_THROW((void)sample(net, 2, 3, 3, cond, {}), ValueError);
  EXPECT_THROW((void)sample(net, 1, 3, 3, {}, SamplerConfig{0.0}), ValueError);
}
