#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "pixelstack/error.hpp"
#include "pixelstack/ops.hpp"
#include "pixelstack/tensor.hpp"
#include "test_util.hpp"

using namespace pixelstack;

TEST(Tensor, FactoriesAndShape) {
  auto t = Tensor::full({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  for (double v : t.data()) EXPECT_EQ(v, 1.5);
  EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
  EXPECT_EQ(shape_string({2, 3}), "[2,3]");
  EXPECT_THROW(Tensor::from_data({2, 2}, {1.0, 2.0}), ShapeError);
}

TEST(Tensor, ItemRequiresSingleElement) {
  EXPECT_THROW((void)Tensor::zeros({2}).item(), ShapeError);
}

TEST(Tensor, NanRaisesNumericError) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(Tensor::make_result("bad", {1}, {nan}, {}, nullptr), NumericError);
  auto a = Tensor::from_data({1}, {std::numeric_limits<double>::max()});
  EXPECT_THROW((void)scale(a, 10.0), NumericError);
}

TEST(Tensor, ResultsAreNotWritable) {
  auto a = Tensor::full({2}, 1.0, true);
  auto b = add(a, a);
  EXPECT_FALSE(b.is_leaf());
  EXPECT_THROW((void)b.mutable_data(), GraphError);
  EXPECT_NO_THROW((void)a.mutable_data());
}

TEST(Tensor, BackwardRequiresScalarLoss) {
  auto a = Tensor::full({2}, 1.0, true);
  EXPECT_THROW(backward(a), GraphError);
  EXPECT_THROW(backward(Tensor::scalar(1.0)), GraphError);
}

TEST(Tensor, GradientsAccumulateAcrossBackwardCalls) {
  auto a = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  auto loss = sum(mul(a, a));
  backward(loss);
  backward(loss);
  const double expect[] = {4.0, 8.0, 12.0};
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(a.grad()[i], expect[i]);
  a.zero_grad();
  for (double g : a.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Tensor, SharedSubexpressionGetsBothContributions) {
  auto x = Tensor::from_data({1}, {3.0}, true);
  auto y = mul(x, x);          // 9
  auto z = add(y, scale(y, 2.0));  // 3y
  backward(sum(z));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0 * 2.0 * 3.0);
}

TEST(Tensor, TapeIsTopologicalAndDeduplicated) {
  auto x = Tensor::from_data({2}, {1.0, -1.0}, true);
  auto h = relu(x);
  auto loss = sum(add(h, h));
  Tape tape(loss);
  const auto names = tape.op_names();
  // leaf x, relu, add, sum; relu appears once despite two uses
  ASSERT_EQ(tape.size(), names.size());
  EXPECT_EQ(std::count(names.begin(), names.end(), "relu"), 1);
  EXPECT_EQ(names.back(), "sum");
}

TEST(Tensor, DetachStopsGradient) {
  auto x = Tensor::from_data({1}, {2.0}, true);
  auto loss = sum(add(mul(x, x.detach()), x));
  backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0 + 1.0);
  EXPECT_FALSE(x.detach().requires_grad());
}

TEST(Tensor, CustomOpThroughMakeResult) {
  auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
  auto cube = Tensor::make_result("cube", {2}, {1.0, 8.0}, {x},
                                  [x](std::span<const double> g, std::span<const std::span<double>> in) {
                                    for (std::size_t i = 0; i < 2; ++i)
                                      in[0][i] += g[i] * 3.0 * x.data()[i] * x.data()[i];
                                  });
  backward(sum(cube));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 12.0);
}
