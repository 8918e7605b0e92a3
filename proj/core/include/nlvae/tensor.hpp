#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nlvae/error.hpp"

namespace nlvae {

/// Extents of a tensor. Image-like data is laid out N x H x W x C.
/// An empty shape denotes a scalar holding one element.
using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs[i]->grad.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Whether ops record a graph on the current thread. Graphs are thread-confined,
/// so the switch is thread-local.
bool grad_enabled();

/// Disables graph recording for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor with reverse-mode gradient tracking.
///
/// A Tensor is a cheap handle; copies alias the same storage. Results of ops
/// remember their operands (the computation graph) only when at least one
/// operand requires a gradient and recording is enabled.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return from_vector(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), fill),
                       requires_grad);
  }

  static Tensor from_vector(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                       shape_str(shape));
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from_vector({}, {v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(node_->shape.size()); }
  std::int64_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::span<const T> values() const { return node_->value; }
  /// Mutable access for initialization and optimizer updates on leaves.
  std::span<T> values_mut() { return node_->value; }
  const std::vector<T>& vec() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return node_->is_leaf; }
  const char* op_name() const { return node_->op; }

  bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() { return node_->ensure_grad(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  T item() const {
    if (node_->value.size() != 1) {
      throw ContractError("item(): tensor of shape " + shape_str(shape()) + " is not a scalar");
    }
    return node_->value[0];
  }

  T at(std::initializer_list<std::int64_t> index) const { return node_->value[offset(index)]; }

  /// A new leaf holding a copy of the values, cut from any graph.
  Tensor detach() const { return from_vector(shape(), node_->value, false); }

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

 private:
  std::size_t offset(std::initializer_list<std::int64_t> index) const {
    if (index.size() != node_->shape.size()) throw ShapeError("at(): rank mismatch");
    std::int64_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
      const auto extent = node_->shape[axis++];
      if (i < 0 || i >= extent) throw ShapeError("at(): index out of range");
      off = off * extent + i;
    }
    return static_cast<std::size_t>(off);
  }

  std::shared_ptr<detail::Node<T>> node_;
};

struct BackwardStats {
  std::size_t nodes_visited = 0;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a gradient.
/// Repeated calls accumulate into leaf gradients. Interior gradients are
/// transient and released once propagated.
template <typename T>
BackwardStats backward(const Tensor<T>& loss);

/// Throws NumericError when any value is NaN or infinite.
template <typename T>
void check_finite(const Tensor<T>& t, const char* where);

template <typename T>
bool all_finite(std::span<const T> values);

namespace detail {

/// Builds the result node of an op. The graph edge and backward closure are only
/// kept when some input requires a gradient and recording is on.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const char* op,
                      std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->is_leaf = false;
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

}  // namespace detail

extern template BackwardStats backward<float>(const Tensor<float>&);
extern template BackwardStats backward<double>(const Tensor<double>&);
extern template void check_finite<float>(const Tensor<float>&, const char*);
extern template void check_finite<double>(const Tensor<double>&, const char*);
extern template bool all_finite<float>(std::span<const float>);
extern template bool all_finite<double>(std::span<const double>);

}  // namespace nlvae
