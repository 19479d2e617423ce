#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pixelstack/tensor.hpp"

namespace pixelstack {

// ---------------------------------------------------------------------------
// Elementwise

enum class ElementwiseKind { relu, tanh, sigmoid, add, mul };

/// Binary kinds broadcast numpy-style; unary kinds ignore `b`.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& x);  // d/dx at 0 is 0
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// ---------------------------------------------------------------------------
// Reductions and views

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// ---------------------------------------------------------------------------
// Convolution and resampling

/// 2-D convolution over NCHW input with implicit zero "same" padding
/// (pad = k/2 on each side) and output size ceil(H/stride).
///
/// `weight_mask`, when defined, must have the weight's shape; it multiplies
/// the weights in the forward pass and the weight gradient in the backward
/// pass, so masked entries always receive exactly zero gradient.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const Tensor& weight_mask = {}, std::size_t stride = 1);

/// Depth-to-space: [N, C*r*r, H, W] -> [N, C, r*H, r*W]. Output pixel
/// (c, r*h + dy, r*w + dx) reads input channel c*r*r + dy*r + dx.
Tensor subpixel_upsample(const Tensor& x, std::size_t r);

/// Inverse of subpixel_upsample.
Tensor space_to_depth(const Tensor& x, std::size_t r);

// ---------------------------------------------------------------------------
// Losses and probability ops. `axis` selects the class dimension; the
// remaining dimensions, flattened in row-major order, index positions.

/// Mean negative log-probability (nats) of `targets` over all positions.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                             std::size_t axis);
/// Same, with the last axis holding the classes.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets);

/// Mean over positions with `position_mask != 0` only. Throws ValueError when
/// no position is selected.
Tensor masked_softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                                    std::size_t axis, std::span<const std::uint8_t> position_mask);

Tensor softmax(const Tensor& logits, std::size_t axis);
Tensor log_softmax(const Tensor& logits, std::size_t axis);

/// Mean over selected positions of KL(target || softmax(logits)).
/// `target_probs` is treated as a constant; target entries are floored at
/// 1e-12 inside the logarithm.
Tensor kl_divergence_with_logits(const Tensor& target_probs, const Tensor& logits, std::size_t axis,
                                 std::span<const std::uint8_t> position_mask);

Tensor mse(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Lookup and estimators

/// Rows of `table` [K, D] selected by `indices`; result [indices.size(), D].
Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> indices);

/// Embedding lookup laid out as a feature map: `indices` holds N*H*W entries
/// in (n, h, w) order, result is [N, D, H, W].
Tensor gather_nchw(const Tensor& table, std::span<const std::int32_t> indices, std::size_t n,
                   std::size_t h, std::size_t w);

/// Forward value of `quantized`, gradient routed unchanged to `z`.
/// Nothing flows into `quantized`.
Tensor straight_through(const Tensor& z, const Tensor& quantized);

// ---------------------------------------------------------------------------
// Constant builders

/// One-hot encoding of an integer map with `values` in (n, g, h, w) order.
/// Result [N, G*bins, H, W]; channel g*bins + v is hot. Where `keep` is
/// given and keep[n*H*W + h*W + w] == 0, every channel of that position is
/// zero (a masked input is distinguishable from value 0).
Tensor one_hot_nchw(std::span<const std::int32_t> values, std::size_t n, std::size_t groups,
                    std::size_t h, std::size_t w, std::size_t bins,
                    std::span<const std::uint8_t> keep = {});

}  // namespace pixelstack
