#include <gtest/gtest.h>

#include <cmath>

#include "pixelstack/error.hpp"
#include "pixelstack/ops.hpp"
#include "pixelstack/pixelcnn.hpp"
#include "test_util.hpp"

using namespace pixelstack;
using pixelstack::testing::random_map;

namespace {

// Independent restatement of the causal rule.
bool oracle_open(MaskKind kind, std::size_t ky, std::size_t kx, std::size_t k, std::size_t gi, std::size_t go) {
  const std::size_t c = k / 2;
  if (ky < c) return true;
  if (ky > c) return false;
  if (kx < c) return true;
  if (kx > c) return false;
  return kind == MaskKind::A ? gi < go : gi <= go;
}

PixelCNNConfig small_config(std::size_t groups, std::size_t bins, std::size_t layers = 3) {
  PixelCNNConfig c;
  c.layers = layers;
  c.hidden = 6 * groups;
  c.bins = bins;
  c.groups = groups;
  return c;
}

}  // namespace

TEST(Mask, MatchesOracleForBothKindsAndLayouts) {
  for (auto kind : {MaskKind::A, MaskKind::B})
    for (auto in_layout : {ChannelLayout::blocked, ChannelLayout::interleaved})
      for (std::size_t k : {1u, 3u, 5u}) {
        MaskedConvSpec s{kind, k, 3, 6, 9, in_layout, ChannelLayout::interleaved};
        auto m = make_weight_mask(s);
        for (std::size_t o = 0; o < 9; ++o)
          for (std::size_t i = 0; i < 6; ++i) {
            const std::size_t gi = in_layout == ChannelLayout::blocked ? i / 2 : i % 3;
            const std::size_t go = o % 3;
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx)
                EXPECT_EQ(m.data()[((o * 6 + i) * k + ky) * k + kx], oracle_open(kind, ky, kx, k, gi, go) ? 1.0 : 0.0);
          }
      }
}

TEST(Mask, SingleGroupKindAHasClosedCentre) {
  auto m = make_weight_mask({MaskKind::A, 3, 1, 1, 1});
  const std::vector<double> expect = {1, 1, 1, 1, 0, 0, 0, 0, 0};
  EXPECT_EQ(std::vector<double>(m.data().begin(), m.data().end()), expect);
  EXPECT_THROW((void)make_weight_mask({MaskKind::A, 4, 1, 1, 1}), ShapeError);
  EXPECT_THROW((void)make_weight_mask({MaskKind::B, 3, 2, 3, 2}), ShapeError);
}

TEST(Raster, IndexAndPositionAreInverse) {
  RasterOrder r{3, 4, 3};
  for (std::size_t t = 0; t < r.size(); ++t) {
    const auto p = r.position(t);
    EXPECT_EQ(r.index(p.row, p.col, p.group), t);
  }
  EXPECT_EQ(r.index(0, 1, 0), 3u);  // all groups of a pixel precede the next pixel
}

class Causality : public ::testing::TestWithParam<std::size_t> {};

// Perturbing the value at position t must leave the logits at positions <= t
// unchanged, and at least one later position must react.
TEST_P(Causality, LogitsIgnoreCurrentAndFuturePositions) {
  const std::size_t groups = GetParam();
  const std::size_t bins = 4, H = 5, W = 5;
  Rng rng(100 + groups);
  AutoregressiveNet net(small_config(groups, bins), rng);
  RasterOrder order{H, W, groups};
  auto x = random_map(2, groups, H, W, bins, rng);
  const auto base = net.forward(x);
  std::size_t reacted = 0;
  for (std::size_t t = 0; t < order.size(); t += 3) {
    const auto p = order.position(t);
    auto y = x;
    y.at(1, p.group, p.row, p.col) = (y.at(1, p.group, p.row, p.col) + 1) % static_cast<std::int32_t>(bins);
    const auto out = net.forward(y);
    bool later_changed = false;
    for (std::size_t s = 0; s < order.size(); ++s) {
      const auto q = order.position(s);
      for (std::size_t b = 0; b < bins; ++b) {
        const auto i = (((1 * bins + b) * groups + q.group) * H + q.row) * W + q.col;
        const double d = std::abs(out.data()[i] - base.data()[i]);
        if (s <= t) {
          ASSERT_EQ(d, 0.0) << "position " << s << " saw a change at " << t;
        } else if (d > 0.0) {
          later_changed = true;
        }
      }
      // item 0 is untouched
      for (std::size_t b = 0; b < bins; ++b) {
        const auto i = (((0 * bins + b) * groups + q.group) * H + q.row) * W + q.col;
        ASSERT_EQ(out.data()[i], base.data()[i]);
      }
    }
    if (later_changed) ++reacted;
  }
  EXPECT_GT(reacted, 0u);
}

INSTANTIATE_TEST_SUITE_P(Groups, Causality, ::testing::Values(1u, 3u));

TEST(PixelCNN, LogitShapeAndParameters) {
  Rng rng(7);
  AutoregressiveNet net(small_config(1, 3, 2), rng);
  auto x = random_map(1, 1, 4, 4, 3, rng);
  auto logits = net.forward(x);
  auto params = net.parameters();
  EXPECT_FALSE(params.empty());
  EXPECT_EQ(logits.shape(), (Shape{1, 3, 1, 4, 4}));
}

TEST(PixelCNN, ZeroLayersGivesUniformDistribution) {
  Rng rng(8);
  auto c = small_config(1, 16, 0);
  AutoregressiveNet net(c, rng);
  auto x = random_map(2, 1, 3, 3, 16, rng);
  EXPECT_NEAR(nll(net.forward(x), x).item(), std::log(16.0), 1e-12);
  EXPECT_NEAR(nats_to_bits(nll(net.forward(x), x).item()), 4.0, 1e-12);
}

TEST(PixelCNN, InputValidation) {
  Rng rng(9);
  AutoregressiveNet net(small_config(1, 4), rng);
  IntMap bad(1, 1, 2, 2);
  bad.values[3] = 4;
  EXPECT_THROW((void)net.forward(bad), ValueError);
  EXPECT_THROW((void)net.forward(IntMap(1, 2, 2, 2)), ShapeError);
  Conditioning cond;
  cond.labels = {0};
  EXPECT_THROW((void)net.forward(IntMap(1, 1, 2, 2), cond), ConfigError);
  auto bad_cfg = small_config(1, 4);
  bad_cfg.hidden = 7;
  bad_cfg.groups = 3;
  EXPECT_THROW(AutoregressiveNet(bad_cfg, rng), ConfigError);
}

TEST(PixelCNN, ClassLabelsOutOfRangeRejected) {
  Rng rng(10);
  auto c = small_config(1, 4);
  c.classes = 3;
  AutoregressiveNet net(c, rng);
  Conditioning cond;
  cond.labels = {3};
  EXPECT_THROW((void)net.forward(IntMap(1, 1, 2, 2), cond), ValueError);
  cond.labels = {-1};
  EXPECT_THROW((void)net.forward(IntMap(1, 1, 2, 2), cond), ValueError);
  cond.labels = {2};
  EXPECT_NO_THROW((void)net.forward(IntMap(1, 1, 2, 2), cond));
}

TEST(PixelCNN, ZeroedModulatorMatchesUnconditionedNet) {
  Rng a(11);
  auto plain_cfg = small_config(1, 4);
  AutoregressiveNet plain(plain_cfg, a);
  auto mod_cfg = plain_cfg;
  mod_cfg.modulator = ModulatorSpec{1, 4, 1, 8, 2, 0};
  Rng c(11);
  AutoregressiveNet modded(mod_cfg, c);
  modded.modulator()->zero_output();
  // same local weights: copy them across
  auto pp = plain.parameters();
  auto mp = modded.parameters();
  for (std::size_t i = 0; i < pp.size(); ++i) {
    auto dst = mp[i]->value.mutable_data();
    auto src = pp[i]->value.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  Rng d(12);
  auto x = random_map(2, 1, 4, 4, 4, d);
  auto codes = random_map(2, 1, 2, 2, 4, d);
  Conditioning cond;
  cond.codes = &codes;
  auto l0 = plain.forward(x);
  auto l1 = modded.forward(x, cond);
  for (std::size_t i = 0; i < l0.numel(); ++i) ASSERT_EQ(l0.data()[i], l1.data()[i]) << i;
}

TEST(PixelCNN, ModulatorRejectsMismatchedCodeMap) {
  Rng rng(13);
  auto cfg = small_config(1, 4);
  cfg.modulator = ModulatorSpec{1, 4, 1, 8, 2, 0};
  AutoregressiveNet net(cfg, rng);
  auto x = IntMap(1, 1, 4, 4);
  auto codes = IntMap(1, 1, 3, 3);
  Conditioning cond;
  cond.codes = &codes;
  EXPECT_THROW((void)net.forward(x, cond), ShapeError);
}

TEST(PixelCNN, NllPerItemSumsToMean) {
  Rng rng(14);
  AutoregressiveNet net(small_config(3, 4), rng);
  auto x = random_map(3, 3, 3, 3, 4, rng);
  auto logits = net.forward(x);
  const auto per = nll_per_item(logits, x);
  double total = 0.0;
  for (double v : per) total += v;
  EXPECT_NEAR(total / (3.0 * 27.0), nll(logits, x).item(), 1e-12);
  EXPECT_DOUBLE_EQ(bits_per_dim(std::log(2.0) * 10.0, 5.0), 2.0);
  EXPECT_THROW((void)bits_per_dim(1.0, 0.0), ValueError);
}

TEST(PixelCNN, ModelNllIsBoundedBelowByTrueEntropy) {
  // Pixels drawn independently from a known categorical: cross-entropy of
  // any model is at least the entropy, up to estimation error.
  const std::vector<double> p = {0.5, 0.25, 0.125, 0.125};
  double entropy = 0.0;
  for (double q : p) entropy -= q * std::log(q);
  Rng rng(15);
  IntMap x(256, 1, 6, 6);
  for (auto& v : x.values) {
    const double u = rng.uniform();
    v = u < 0.5 ? 0 : u < 0.75 ? 1 : u < 0.875 ? 2 : 3;
  }
  auto cfg = small_config(1, 4, 2);
  AutoregressiveNet net(cfg, rng);
  auto params = net.parameters();
  Adam opt(AdamConfig{5e-3});
  for (int step = 0; step < 80; ++step) {
    zero_grad(params);
    backward(nll(net.forward(x), x));
    opt.step(params);
  }
  // Fresh sample from the same distribution to evaluate on.
  IntMap y(256, 1, 6, 6);
  for (auto& v : y.values) {
    const double u = rng.uniform();
    v = u < 0.5 ? 0 : u < 0.75 ? 1 : u < 0.875 ? 2 : 3;
  }
  const double model = nll(net.forward(y), y).item();
  // sd of the empirical entropy estimate over 9216 values is about 0.012 nats
  EXPECT_GE(model, entropy - 0.04);
  EXPECT_LT(model, entropy + 0.1);  // and it did learn the marginal
}
