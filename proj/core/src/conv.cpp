#include <Eigen/Core>
#include <algorithm>
#include <memory>
#include <string>

#include "pixelstack/error.hpp"
#include "pixelstack/ops.hpp"

namespace pixelstack {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::size_t n, cin, h, w;
  std::size_t cout, kh, kw;
  std::size_t stride, ph, pw;
  std::size_t oh, ow;
  [[nodiscard]] std::size_t k() const { return cin * kh * kw; }
  [[nodiscard]] std::size_t p() const { return oh * ow; }
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = cols + ((c * g.kh + ky) * g.kw + kx) * P;
        const double* plane = x + c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.ph);
          double* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pw);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dx) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = cols + ((c * g.kh + ky) * g.kw + kx) * P;
        double* plane = dx + c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.ph);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const double* src = row + oy * g.ow;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pw);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, const Tensor& weight_mask,
              std::size_t stride) {
  if (input.rank() != 4) throw ShapeError("conv2d: input must be NCHW, got " + shape_string(input.shape()));
  if (weights.rank() != 4) throw ShapeError("conv2d: weights must be [Co,Ci,kH,kW]");
  if (stride == 0) throw ValueError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = weights.dim(0);
  g.kh = weights.dim(2);
  g.kw = weights.dim(3);
  if (weights.dim(1) != g.cin) {
    throw ShapeError("conv2d: input has " + std::to_string(g.cin) + " channels, weights expect " +
                     std::to_string(weights.dim(1)));
  }
  if (g.kh % 2 == 0 || g.kw % 2 == 0) {
    throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(g.kh) + "x" + std::to_string(g.kw));
  }
  if (!bias.defined() || bias.shape() != Shape{g.cout}) {
    throw ShapeError("conv2d: bias must have shape [" + std::to_string(g.cout) + "]");
  }
  if (weight_mask.defined() && weight_mask.shape() != weights.shape()) {
    throw ShapeError("conv2d: weight mask " + shape_string(weight_mask.shape()) + " does not match weights " +
                     shape_string(weights.shape()));
  }
  g.stride = stride;
  g.ph = g.kh / 2;
  g.pw = g.kw / 2;
  g.oh = (g.h - 1) / stride + 1;
  g.ow = (g.w - 1) / stride + 1;

  // Every Eigen operand lives in Eigen-owned (aligned) storage: its kernels
  // peel leading elements by pointer alignment, so summation order would
  // otherwise depend on where the heap put a tensor.
  const std::size_t K = g.k(), P = g.p();
  const auto ki = static_cast<Eigen::Index>(K);
  const auto pi = static_cast<Eigen::Index>(P);
  const auto ci = static_cast<Eigen::Index>(g.cout);
  auto weff = std::make_shared<RowMatrix>(ConstMatMap(weights.data().data(), ci, ki));
  if (weight_mask.defined()) weff->array() *= ConstMatMap(weight_mask.data().data(), ci, ki).array();
  auto cols = std::make_shared<RowMatrix>(static_cast<Eigen::Index>(g.n * K), pi);
  std::vector<double> out(g.n * g.cout * P);
  const auto x = input.data();
  const auto b = bias.data();
  RowMatrix y(ci, pi);
  for (std::size_t s = 0; s < g.n; ++s) {
    im2col(x.data() + s * g.cin * g.h * g.w, g, cols->data() + s * K * P);
    y.noalias() = *weff * cols->middleRows(static_cast<Eigen::Index>(s * K), ki);
    for (std::size_t co = 0; co < g.cout; ++co) y.row(static_cast<Eigen::Index>(co)).array() += b[co];
    std::copy(y.data(), y.data() + g.cout * P, out.data() + s * g.cout * P);
  }

  const Tensor mask = weight_mask.defined() ? weight_mask.detach() : Tensor{};
  return Tensor::make_result(
      "conv2d", Shape{g.n, g.cout, g.oh, g.ow}, std::move(out), {input, weights, bias},
      [g, weff, cols, mask](std::span<const double> grad, std::span<const std::span<double>> in) {
        const std::size_t K = g.k(), P = g.p();
        const auto ki = static_cast<Eigen::Index>(K);
        const auto pi = static_cast<Eigen::Index>(P);
        const auto ci = static_cast<Eigen::Index>(g.cout);
        RowMatrix dw = RowMatrix::Zero(ci, ki);
        RowMatrix dy(ci, pi);
        RowMatrix dcols(ki, pi);
        for (std::size_t s = 0; s < g.n; ++s) {
          dy = ConstMatMap(grad.data() + s * g.cout * P, ci, pi);
          const auto c = cols->middleRows(static_cast<Eigen::Index>(s * K), ki);
          if (!in[1].empty()) dw.noalias() += dy * c.transpose();
          if (!in[2].empty()) {
            for (std::size_t co = 0; co < g.cout; ++co) in[2][co] += dy.row(static_cast<Eigen::Index>(co)).sum();
          }
          if (!in[0].empty()) {
            dcols.noalias() = weff->transpose() * dy;
            col2im_add(dcols.data(), g, in[0].data() + s * g.cin * g.h * g.w);
          }
        }
        if (!in[1].empty()) {
          const double* d = dw.data();
          if (mask.defined()) {
            const auto m = mask.data();
            for (std::size_t i = 0; i < in[1].size(); ++i) {
              if (m[i] != 0.0) in[1][i] += d[i] * m[i];
            }
          } else {
            for (std::size_t i = 0; i < in[1].size(); ++i) in[1][i] += d[i];
          }
        }
      });
}

}  // namespace pixelstack
