#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "pixelstack/aux_decoders.hpp"
#include "pixelstack/error.hpp"
#include "pixelstack/ops.hpp"
#include "test_util.hpp"

using namespace pixelstack;
using pixelstack::testing::random_map;
using pixelstack::testing::random_tensor;

TEST(MSPMaskTest, UnionOfClippedSquares) {
  const std::vector<std::pair<std::size_t, std::size_t>> pos = {{0, 0}, {3, 4}, {4, 4}};
  const std::size_t H = 6, W = 7, s = 1;
  auto m = make_msp_mask(pos, s, H, W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      bool covered = false, centre = false;
      for (auto [i, j] : pos) {
        covered |= std::abs(static_cast<long>(y) - static_cast<long>(i)) <= 1 &&
                   std::abs(static_cast<long>(x) - static_cast<long>(j)) <= 1;
        centre |= (y == i && x == j);
      }
      EXPECT_EQ(m.input_mask[y * W + x], covered ? 0 : 1) << y << "," << x;
      EXPECT_EQ(m.output_mask[y * W + x], centre ? 1 : 0);
    }
  EXPECT_THROW((void)make_msp_mask({{6, 0}}, 1, H, W), ValueError);
}

TEST(MSPMaskTest, PositionsPerImageScalesWithArea) {
  EXPECT_EQ(positions_per_image(3, 64, 64), 30u);
  EXPECT_EQ(positions_per_image(3, 32, 32), 7u);
  EXPECT_EQ(positions_per_image(15, 64, 64), 3u);
  EXPECT_EQ(positions_per_image(31, 8, 8), 1u);
  EXPECT_THROW((void)positions_per_image(4), ValueError);
  for (std::size_t side : {1u, 3u, 5u, 7u, 9u, 15u, 31u})
    EXPECT_GE(positions_per_image(side, 16, 16), 1u) << side;
}

TEST(MSPMaskTest, RandomMaskHasDistinctPositions) {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    auto m = random_msp_mask(3, 16, 16, rng);
    std::set<std::pair<std::size_t, std::size_t>> uniq(m.positions.begin(), m.positions.end());
    EXPECT_EQ(uniq.size(), m.positions.size());
    EXPECT_EQ(m.positions.size(), positions_per_image(3, 16, 16));
    EXPECT_EQ(m.offset, 1u);
  }
}

TEST(MSPTeacherTest, IgnoresValuesUnderTheMask) {
  Rng rng(2);
  MSPTeacher teacher({2, 8}, 1, 4, rng);
  auto x = random_map(1, 1, 8, 8, 4, rng);
  std::vector<MSPMask> masks = {make_msp_mask({{3, 3}}, 1, 8, 8)};
  auto a = teacher(x, masks);
  auto y = x;
  for (std::size_t r = 2; r <= 4; ++r)
    for (std::size_t c = 2; c <= 4; ++c) y.at(0, 0, r, c) = (y.at(0, 0, r, c) + 1) % 4;
  auto b = teacher(y, masks);
  EXPECT_EQ(pixelstack::testing::max_abs_diff(a.data(), b.data()), 0.0);
  // outside the mask the input does matter
  auto z = x;
  z.at(0, 0, 0, 0) = (z.at(0, 0, 0, 0) + 1) % 4;
  EXPECT_GT(pixelstack::testing::max_abs_diff(a.data(), teacher(z, masks).data()), 0.0);
}

TEST(MSPTeacherTest, OutputPositionsAndLosses) {
  std::vector<MSPMask> masks = {make_msp_mask({{0, 1}}, 0, 2, 2), make_msp_mask({{1, 1}}, 0, 2, 2)};
  auto sel = output_positions(masks, 2);
  ASSERT_EQ(sel.size(), 16u);  // N * G * H * W
  const std::vector<std::uint8_t> expect = {0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_EQ(sel, expect);
  Rng rng(3);
  auto logits = random_tensor({2, 3, 2, 2, 2}, rng);
  auto x = random_map(2, 2, 2, 2, 3, rng);
  auto probs = softmax(logits, 1);
  EXPECT_NEAR(distill_loss(probs, logits, masks).item(), 0.0, 1e-12);
  EXPECT_GT(teacher_loss(logits, x, masks).item(), 0.0);
}

TEST(FFAux, LossKindFollowsLevel) {
  EXPECT_EQ(aux_loss_for_level(1), AuxLossKind::mse_pixels);
  EXPECT_EQ(aux_loss_for_level(2), AuxLossKind::categorical_codes);
  EXPECT_THROW((void)aux_loss_for_level(0), ValueError);
}

TEST(FFAux, LossShapeMismatchIsShapeError) {
  IntMap x(1, 1, 4, 4);
  EXPECT_THROW((void)ff_aux_loss(1, x, 16, Tensor::zeros({1, 16, 1, 4, 4})), ShapeError);
  EXPECT_THROW((void)ff_aux_loss(2, x, 16, Tensor::zeros({1, 1, 4, 4})), ShapeError);
  EXPECT_THROW((void)ff_aux_loss(2, x, 16, Tensor::zeros({1, 8, 1, 4, 4})), ShapeError);
  EXPECT_NEAR(ff_aux_loss(2, x, 16, Tensor::zeros({1, 16, 1, 4, 4})).item(), std::log(16.0), 1e-12);
  // pixel MSE in unit scale
  IntMap full(1, 1, 1, 1, 15);
  EXPECT_NEAR(ff_aux_loss(1, full, 16, Tensor::zeros({1, 1, 1, 1})).item(), 1.0, 1e-12);
}

TEST(FFAux, DepthZeroDecoderSeesOneCode) {
  Rng rng(4);
  AuxDecoder dec("aux", {0, 8, 2}, AuxLossKind::mse_pixels, 3, 1, 16, rng);
  auto codes = random_tensor({1, 3, 3, 3}, rng);
  auto base = dec(codes);
  ASSERT_EQ(base.shape(), (Shape{1, 1, 6, 6}));
  auto bumped = std::vector<double>(codes.data().begin(), codes.data().end());
  bumped[1 * 9 + 1 * 3 + 2] += 1.0;  // channel 1, (1, 2)
  auto out = dec(Tensor::from_data(codes.shape(), bumped));
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) {
      const bool inside = y / 2 == 1 && x / 2 == 2;
      const double d = std::abs(out.data()[y * 6 + x] - base.data()[y * 6 + x]);
      if (!inside) EXPECT_EQ(d, 0.0) << y << "," << x;
    }
}

TEST(FFAux, DeeperDecoderWidensReceptiveField) {
  Rng rng(5);
  AuxDecoder dec("aux", {2, 8, 2}, AuxLossKind::categorical_codes, 2, 1, 4, rng);
  auto codes = random_tensor({1, 2, 4, 4}, rng);
  auto base = dec(codes);
  ASSERT_EQ(base.shape(), (Shape{1, 4, 1, 8, 8}));
  auto bumped = std::vector<double>(codes.data().begin(), codes.data().end());
  bumped[1 * 4 + 1] += 1.0;
  auto out = dec(Tensor::from_data(codes.shape(), bumped));
  std::size_t changed_outside = 0;
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x)
        if (!(y / 2 == 1 && x / 2 == 1) && out.data()[(b * 8 + y) * 8 + x] != base.data()[(b * 8 + y) * 8 + x])
          ++changed_outside;
  EXPECT_GT(changed_outside, 0u);
}

TEST(EncoderTest, OutputShapeAndDeterministicCodes) {
  Rng rng(6);
  EncoderSpec spec;
  spec.in_channels = 1;
  spec.in_bins = 4;
  spec.layers = 1;
  spec.hidden = 8;
  spec.stride = 2;
  spec.code_channels = 2;
  spec.code_dim = 3;
  spec.code_bits = 2;
  Encoder enc(spec, rng);
  auto x = random_map(3, 1, 6, 6, 4, rng);
  auto z = enc(x);
  EXPECT_EQ(z.shape(), (Shape{3, 6, 3, 3}));
  Codebook cb(4, 3);
  cb.init_from(z, rng);
  auto a = encode_codes(enc, cb, x, 2);
  auto b = encode_codes(enc, cb, x, 64);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.channels, 2u);
  EXPECT_EQ(a.height, 3u);
}

TEST(EncoderTraining, FFLossDecreases) {
  Rng rng(7);
  auto x = random_map(16, 1, 8, 8, 4, rng);
  for (std::size_t i = 0; i < x.values.size(); ++i) x.values[i] = (i / 8 % 2) ? 3 : 0;  // stripes
  EncoderSpec spec{1, 4, 1, 8, 2, 1, 4, 2};
  TrainOptions opts;
  opts.steps = 60;
  opts.batch = 8;
  opts.lr = 3e-3;
  opts.seed = 1;
  auto trained = train_encoder_ff(x, 1, spec, {1, 8, 2}, opts);
  ASSERT_EQ(trained.loss_history.size(), 60u);
  EXPECT_LT(trained.loss_history.back(), trained.loss_history.front());
  EXPECT_GE(trained.perplexity, 1.0);
}

TEST(EncoderTraining, MSPTrainerRunsAndIsSeedDeterministic) {
  Rng rng(8);
  auto x = random_map(8, 1, 8, 8, 4, rng);
  EncoderSpec spec{1, 4, 1, 8, 2, 1, 4, 2};
  MSPSpec msp;
  msp.teacher = {1, 8};
  msp.mask_side = 3;
  msp.head = {1, 8, 2};
  TrainOptions opts;
  opts.steps = 5;
  opts.batch = 4;
  opts.seed = 3;
  auto a = train_encoder_msp(x, spec, msp, opts);
  auto b = train_encoder_msp(x, spec, msp, opts);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(encode_codes(a.encoder, a.codebook, x), encode_codes(b.encoder, b.codebook, x));
}

TEST(MSPMaskTest, UnmaskedInputIsFarFromEveryPosition) {
  Rng rng(9);
  for (std::size_t side : {1u, 3u, 5u, 7u}) {
    for (int rep = 0; rep < 25; ++rep) {
      const std::size_t H = 5 + rng.below(12), W = 5 + rng.below(12);
      const auto m = random_msp_mask(side, H, W, rng);
      const long s = static_cast<long>(side / 2);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          if (!m.input_mask[y * W + x]) continue;
          for (auto [i, j] : m.positions) {
            const long cheb = std::max(std::abs(static_cast<long>(y) - static_cast<long>(i)),
                                       std::abs(static_cast<long>(x) - static_cast<long>(j)));
            ASSERT_GT(cheb, s);
          }
        }
    }
  }
}

TEST(MSPTeacherTest, DistillationGivesTeacherNoGradient) {
  Rng rng(10);
  MSPTeacher teacher({1, 8}, 1, 4, rng);
  auto x = random_map(2, 1, 6, 6, 4, rng);
  std::vector<MSPMask> masks = {random_msp_mask(3, 6, 6, rng), random_msp_mask(3, 6, 6, rng)};
  auto probs = softmax(teacher(x, masks), 1);  // still attached to the teacher's graph
  auto student = random_tensor({2, 4, 1, 6, 6}, rng, true);
  backward(distill_loss(probs, student, masks));
  ParameterList tp;
  teacher.collect(tp);
  for (auto* p : tp)
    for (double g : p->value.grad()) ASSERT_EQ(g, 0.0) << p->name;
  EXPECT_TRUE(student.has_grad());
}

TEST(EncoderTraining, DroppingTheAuxDecoderLeavesEncoderOutputs) {
  Rng rng(11);
  auto x = random_map(8, 1, 8, 8, 4, rng);
  EncoderSpec spec{1, 4, 1, 8, 2, 1, 4, 2};
  TrainOptions opts;
  opts.steps = 5;
  opts.batch = 4;
  auto trainer = make_ff_trainer(x, 1, spec, {1, 8, 2}, opts);
  for (int i = 0; i < 5; ++i) (void)trainer->step();
  const auto before = trainer->encoder()(x);
  const auto codes_before = encode_codes(trainer->encoder(), trainer->codebook(), x);
  auto trained = trainer->finish();
  trainer.reset();
  EXPECT_EQ(pixelstack::testing::max_abs_diff(trained.encoder(x).data(), before.data()), 0.0);
  EXPECT_EQ(encode_codes(trained.encoder, trained.codebook, x), codes_before);
}
