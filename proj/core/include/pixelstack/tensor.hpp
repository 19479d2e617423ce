#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pixelstack {

using Shape = std::vector<std::size_t>;

[[nodiscard]] std::size_t shape_numel(const Shape& shape) noexcept;
[[nodiscard]] std::string shape_string(const Shape& shape);

/// Gradient rule of a recorded operation.
///
/// `out_grad` is the gradient of the loss w.r.t. the operation's output.
/// `in_grads[i]` is an accumulation buffer for input i, or an empty span if
/// that input does not require a gradient. Rules must add into the buffers.
using BackwardFn =
    std::function<void(std::span<const double> out_grad, std::span<const std::span<double>> in_grads)>;

namespace detail {
struct Node;
}

/// Dense row-major float64 tensor with optional gradient.
///
/// A Tensor is a cheap shared handle. Values produced by operations are
/// immutable; only leaves (parameters, inputs) expose mutable storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  [[nodiscard]] bool defined() const noexcept { return static_cast<bool>(node_); }
  [[nodiscard]] const Shape& shape() const;
  [[nodiscard]] std::size_t dim(std::size_t axis) const;
  [[nodiscard]] std::size_t rank() const { return shape().size(); }
  [[nodiscard]] std::size_t numel() const;

  [[nodiscard]] std::span<const double> data() const;
  /// Writable storage; throws GraphError unless this tensor is a leaf.
  [[nodiscard]] std::span<double> mutable_data();
  [[nodiscard]] double item() const;

  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] bool is_leaf() const;
  [[nodiscard]] bool has_grad() const;
  /// Gradient buffer; empty until a backward pass reaches this tensor.
  [[nodiscard]] std::span<const double> grad() const;
  void zero_grad();

  /// Same values, cut from the graph (stop-gradient).
  [[nodiscard]] Tensor detach() const;

  /// Stable identity of the underlying node.
  [[nodiscard]] const void* id() const noexcept { return node_.get(); }

  /// Records the result of a custom operation. Used by every op in ops.hpp;
  /// exposed so that tests and extensions can define their own rules.
  /// Throws NumericError when `data` contains NaN or Inf.
  static Tensor make_result(std::string_view op, Shape shape, std::vector<double> data,
                            std::vector<Tensor> inputs, BackwardFn backward);

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered record of the operations reachable from a loss.
///
/// Built by depth-first traversal from the loss; every node appears once and
/// after all of its inputs. Only nodes that require gradients are recorded.
class Tape {
 public:
  /// Throws GraphError if `loss` is not a scalar or does not require grad.
  explicit Tape(const Tensor& loss);

  [[nodiscard]] std::size_t size() const noexcept { return order_.size(); }
  [[nodiscard]] std::vector<std::string> op_names() const;

  /// Seeds d(loss)/d(loss) = 1 and runs every rule once in reverse order.
  /// Leaf gradients accumulate across calls; intermediate buffers are reset.
  void backward() const;

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
};

/// Convenience: `Tape(loss).backward()`.
void backward(const Tensor& loss);

}  // namespace pixelstack
