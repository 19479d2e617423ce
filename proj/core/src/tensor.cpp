#include "pixelstack/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "pixelstack/error.hpp"

namespace pixelstack {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};

}  // namespace detail

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_string(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return node;
}

const detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw GraphError("use of undefined tensor");
  return *node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf(Shape{1}, std::vector<double>{value}, requires_grad));
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).value.size(); }

std::span<const double> Tensor::data() const { return checked(node_).value; }

std::span<double> Tensor::mutable_data() {
  checked(node_);
  if (!node_->inputs.empty() || node_->backward) {
    throw GraphError("only leaf tensors are mutable (op '" + node_->op + "')");
  }
  return node_->value;
}

double Tensor::item() const {
  const auto& node = checked(node_);
  if (node.value.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(node.shape));
  }
  return node.value[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

bool Tensor::is_leaf() const {
  const auto& node = checked(node_);
  return node.inputs.empty() && !node.backward;
}

bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }

std::span<const double> Tensor::grad() const { return checked(node_).grad; }

void Tensor::zero_grad() {
  checked(node_);
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& node = checked(node_);
  auto out = std::make_shared<detail::Node>();
  out->shape = node.shape;
  out->value = node.value;
  out->op = "detach";
  return Tensor(std::move(out));
}

Tensor Tensor::make_result(std::string_view op, Shape shape, std::vector<double> data,
                           std::vector<Tensor> inputs, BackwardFn backward) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError(std::string(op) + ": result length does not match " + shape_string(shape));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw NumericError(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->op = std::string(op);
  bool any = false;
  for (const auto& in : inputs) any = any || checked(in.node_).requires_grad;
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(std::move(in.node_));
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tape::Tape(const Tensor& loss) {
  const auto& root = checked(loss.node_);
  if (root.value.size() != 1) {
    throw GraphError("backward requires a scalar loss, got shape " + shape_string(root.shape));
  }
  if (!root.requires_grad) {
    throw GraphError("loss is detached from every parameter (no gradient path)");
  }
  // Iterative post-order DFS; inputs are visited in declaration order so the
  // resulting order is deterministic.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(loss.node_, 0);
  visited.insert(loss.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
      continue;
    }
    order_.push_back(std::move(node));
    stack.pop_back();
  }
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto& node : order_) names.push_back(node->op);
  return names;
}

void Tape::backward() const {
  for (const auto& node : order_) {
    const bool leaf = node->inputs.empty() && !node->backward;
    if (node->grad.size() != node->value.size()) {
      node->grad.assign(node->value.size(), 0.0);
    } else if (!leaf) {
      std::fill(node->grad.begin(), node->grad.end(), 0.0);
    }
  }
  order_.back()->grad[0] += 1.0;

  std::vector<std::span<double>> in_grads;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    const auto& node = **it;
    if (!node.backward) continue;
    in_grads.clear();
    for (const auto& in : node.inputs) {
      if (in->requires_grad) {
        in_grads.emplace_back(in->grad);
      } else {
        in_grads.emplace_back();
      }
    }
    node.backward(node.grad, in_grads);
  }
}

void backward(const Tensor& loss) { Tape(loss).backward(); }

}  // namespace pixelstack
