#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pixelstack/error.hpp"
#include "pixelstack/gradcheck.hpp"
#include "pixelstack/ops.hpp"
#include "pixelstack/vq.hpp"
#include "test_util.hpp"

using namespace pixelstack;
using pixelstack::testing::random_tensor;

namespace {

Codebook random_codebook(std::size_t k, std::size_t d, Rng& rng, bool ema = true) {
  Codebook cb(k, d, 0.9, 1e-5, ema);
  std::vector<double> e(k * d);
  for (auto& v : e) v = rng.uniform(-1, 1);
  cb.set_embeddings(e);
  return cb;
}

// z [N, c*d, H, W]: vector (n, ch, y, x) component j sits at channel ch*d + j.
std::vector<double> vector_at(const Tensor& z, std::size_t d, std::size_t n, std::size_t ch, std::size_t y,
                              std::size_t x) {
  const auto C = z.dim(1), H = z.dim(2), W = z.dim(3);
  std::vector<double> v(d);
  for (std::size_t j = 0; j < d; ++j) v[j] = z.data()[((n * C + ch * d + j) * H + y) * W + x];
  return v;
}

std::size_t brute_nearest(const Codebook& cb, const std::vector<double>& v) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cb.k(); ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < cb.d(); ++j) {
      const double diff = v[j] - cb.embeddings.value.data()[c * cb.d() + j];
      s += diff * diff;
    }
    if (s < bd) {
      bd = s;
      best = c;
    }
  }
  return best;
}

}  // namespace

TEST(Quantize, AssignmentsMatchBruteForce) {
  Rng rng(1);
  auto cb = random_codebook(7, 3, rng);
  auto z = random_tensor({2, 6, 3, 4}, rng);  // two code channels of d=3
  auto q = quantize(z, cb);
  ASSERT_EQ(q.indices.channels, 2u);
  ASSERT_EQ(q.quantized.shape(), z.shape());
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t ch = 0; ch < 2; ++ch)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 4; ++x) {
          const auto v = vector_at(z, 3, n, ch, y, x);
          const auto idx = brute_nearest(cb, v);
          EXPECT_EQ(static_cast<std::size_t>(q.indices.at(n, ch, y, x)), idx);
          EXPECT_EQ(nearest_code(cb, v), idx);
          const auto e = vector_at(q.quantized, 3, n, ch, y, x);
          for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(e[j], cb.embeddings.value.data()[idx * 3 + j]);
        }
}

TEST(Quantize, TiesGoToLowestIndex) {
  Codebook cb(3, 1);
  cb.set_embeddings(std::vector<double>{1.0, -1.0, 1.0});
  const std::vector<double> zero = {0.0};
  EXPECT_EQ(nearest_code(cb, zero), 0u);
  const std::vector<double> one = {1.0};
  EXPECT_EQ(nearest_code(cb, one), 0u);
}

TEST(Quantize, ChannelCountMustBeMultipleOfD) {
  Rng rng(2);
  auto cb = random_codebook(4, 3, rng);
  EXPECT_THROW((void)quantize(Tensor::zeros({1, 4, 2, 2}), cb), ShapeError);
}

TEST(StraightThrough, ForwardIsQuantizedAndGradientIsIdentity) {
  Rng rng(3);
  auto cb = random_codebook(5, 2, rng);
  auto z = random_tensor({1, 2, 3, 3}, rng, true);
  auto q = quantize(z, cb);
  auto st = straight_through(z, q);
  EXPECT_EQ(pixelstack::testing::max_abs_diff(st.data(), q.quantized.data()), 0.0);
  auto w = random_tensor(z.shape(), rng);
  backward(sum(mul(st, w)));
  ASSERT_TRUE(z.has_grad());
  EXPECT_EQ(pixelstack::testing::max_abs_diff(z.grad(), w.data()), 0.0);
}

TEST(Commitment, GradientMatchesFiniteDifference) {
  Rng rng(4);
  auto cb = random_codebook(6, 3, rng);
  auto z = random_tensor({2, 3, 2, 2}, rng, true);
  auto rep = gradient_check([&] { return quantize(z, cb).commitment_loss; }, {z}, 1e-6, 1e-5);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(Commitment, AnalyticValue) {
  Codebook cb(1, 2);
  cb.set_embeddings(std::vector<double>{0.5, -0.5});
  auto z = Tensor::from_data({1, 2, 1, 1}, {1.5, 0.5}, true);
  auto q = quantize(z, cb);
  EXPECT_DOUBLE_EQ(q.commitment_loss.item(), 1.0);  // mean of 1^2, 1^2
  backward(q.commitment_loss);
  EXPECT_DOUBLE_EQ(z.grad()[0], 1.0);  // 2 * (1.5 - 0.5) / 2
}

TEST(VqLoss, EmaModeDropsCodebookTerm) {
  Rng rng(5);
  auto cb = random_codebook(4, 2, rng);
  auto z = random_tensor({1, 2, 2, 2}, rng, true);
  auto q = quantize(z, cb);
  auto recon = Tensor::scalar(1.0);
  const double c = q.commitment_loss.item();
  EXPECT_NEAR(vq_loss(recon, q, {0.25, true}).item(), 1.0 + 0.25 * c, 1e-12);
  EXPECT_NEAR(vq_loss(recon, q, {0.25, false}).item(), 1.0 + c + 0.25 * c, 1e-12);
}

TEST(Ema, OneStepMatchesFormula) {
  Codebook cb(2, 1, 0.5, 1e-5);
  cb.set_embeddings(std::vector<double>{0.0, 10.0});
  auto z = Tensor::from_data({1, 1, 1, 3}, {1.0, 2.0, 9.0});
  IntMap idx(1, 1, 1, 3);
  idx.values = {0, 0, 1};
  ema_update(cb, z, idx);
  // N0 = .5*1 + .5*2, m0 = .5*0 + .5*3, e0 = m0/N0
  EXPECT_DOUBLE_EQ(cb.counts[0], 1.5);
  EXPECT_DOUBLE_EQ(cb.sums[0], 1.5);
  EXPECT_DOUBLE_EQ(cb.embeddings.value.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(cb.counts[1], 1.0);
  EXPECT_DOUBLE_EQ(cb.embeddings.value.data()[1], 9.5);
  EXPECT_LT(cb.ema_residual(), 1e-12);
}

TEST(Ema, UnusedCodeDecaysButStaysFinite) {
  Codebook cb(2, 1, 0.5, 1e-5);
  cb.set_embeddings(std::vector<double>{0.0, 4.0});
  auto z = Tensor::from_data({1, 1, 1, 1}, {0.0});
  IntMap idx(1, 1, 1, 1);
  for (int i = 0; i < 60; ++i) ema_update(cb, z, idx);
  EXPECT_TRUE(std::isfinite(cb.embeddings.value.data()[1]));
  EXPECT_LT(cb.ema_residual(), 1e-9);
}

TEST(Ema, ConvergesToClusterMeans) {
  Rng rng(6);
  const std::vector<double> centres = {-2.0, 0.5, 3.0};
  Codebook cb(3, 1, 0.9, 1e-5);
  cb.set_embeddings(std::vector<double>{-1.0, 0.0, 1.0});
  for (int it = 0; it < 300; ++it) {
    std::vector<double> v(60);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = centres[i % 3] + rng.uniform(-0.2, 0.2);
    auto z = Tensor::from_data({1, 1, 1, v.size()}, v);
    auto q = quantize(z, cb);
    ema_update(cb, z, q.indices);
  }
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(cb.embeddings.value.data()[c], centres[c], 0.05);
}

TEST(Ema, RejectsGradientCodebook) {
  Codebook cb(2, 1, 0.9, 1e-5, false);
  EXPECT_THROW(ema_update(cb, Tensor::zeros({1, 1, 1, 1}), IntMap(1, 1, 1, 1)), ConfigError);
}

TEST(Codebook, InitFromPicksDataVectors) {
  Rng rng(7);
  auto z = random_tensor({1, 2, 4, 4}, rng);
  Codebook cb(4, 2);
  cb.init_from(z, rng);
  EXPECT_TRUE(cb.initialized());
  for (std::size_t c = 0; c < 4; ++c) {
    bool found = false;
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) {
        auto v = vector_at(z, 2, 0, 0, y, x);
        if (v[0] == cb.embeddings.value.data()[c * 2] && v[1] == cb.embeddings.value.data()[c * 2 + 1]) found = true;
      }
    EXPECT_TRUE(found) << "code " << c;
  }
}

TEST(Codebook, ReseedReplacesOnlyDeadCodes) {
  Rng rng(8);
  Codebook cb(3, 1, 0.9);
  cb.set_embeddings(std::vector<double>{0.0, 1.0, 2.0});
  cb.counts = {5.0, 1e-4, 5.0};
  for (std::size_t c = 0; c < 3; ++c) cb.sums[c] = cb.embeddings.value.data()[c] * cb.counts[c];
  auto z = Tensor::from_data({1, 1, 1, 2}, {7.0, 8.0});
  EXPECT_EQ(cb.reseed_dead(z, 0.01, rng), 1u);
  EXPECT_EQ(cb.embeddings.value.data()[0], 0.0);
  const double e1 = cb.embeddings.value.data()[1];
  EXPECT_TRUE(e1 == 7.0 || e1 == 8.0);
  EXPECT_EQ(cb.embeddings.value.data()[2], 2.0);
}

TEST(Perplexity, UniformAndSingleCode) {
  const std::vector<std::int32_t> uniform = {0, 1, 2, 3, 0, 1, 2, 3};
  EXPECT_NEAR(perplexity(uniform, 4), 4.0, 1e-12);
  const std::vector<std::int32_t> one = {2, 2, 2};
  EXPECT_NEAR(perplexity(one, 4), 1.0, 1e-12);
  const std::vector<std::int32_t> bad = {4};
  EXPECT_THROW((void)perplexity(bad, 4), ValueError);
}

TEST(Quantize, IdempotentOnCodebookVectors) {
  Rng rng(9);
  auto cb = random_codebook(5, 3, rng);
  auto z = random_tensor({2, 3, 3, 3}, rng);
  auto q = quantize(z, cb);
  auto again = quantize(q.quantized, cb);
  EXPECT_EQ(again.indices, q.indices);
  EXPECT_EQ(pixelstack::testing::max_abs_diff(again.quantized.data(), q.quantized.data()), 0.0);
  EXPECT_EQ(again.commitment_loss.item(), 0.0);
}

TEST(Ema, ConsistentAfterEveryUpdate) {
  Rng rng(10);
  Codebook cb(6, 2, 0.95, 1e-5);
  for (int it = 0; it < 50; ++it) {
    auto z = random_tensor({2, 2, 4, 4}, rng, false, -2, 2);
    if (!cb.initialized()) cb.init_from(z, rng);
    ema_update(cb, z, quantize(z, cb).indices);
    ASSERT_LT(cb.ema_residual(), 1e-12) << it;
  }
}

TEST(GradientCodebook, StepMovesTowardAssignedMean) {
  Rng rng(11);
  Codebook cb(3, 2, 0.99, 1e-5, false);
  cb.set_embeddings(std::vector<double>{-1.0, 0.0, 1.0, 0.0, 0.0, 2.0});
  auto z = random_tensor({1, 2, 4, 4}, rng, false, -1.5, 1.5);
  auto q = quantize(z, cb);
  backward(vq_loss(Tensor::scalar(0.0, true), q, {0.25, false}));
  const auto g = cb.embeddings.value.grad();
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> m(2, 0.0);
    double n = 0.0;
    for (std::size_t p = 0; p < 16; ++p) {
      if (static_cast<std::size_t>(q.indices.values[p]) != c) continue;
      n += 1.0;
      m[0] += z.data()[p];
      m[1] += z.data()[16 + p];
    }
    if (n == 0.0) continue;
    double dot = 0.0;
    for (std::size_t j = 0; j < 2; ++j) dot += -g[c * 2 + j] * (m[j] / n - cb.embeddings.value.data()[c * 2 + j]);
    EXPECT_GT(dot, 0.0) << "code " << c;
  }
}
