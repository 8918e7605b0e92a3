#include "nlvae/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace nlvae {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto extent : shape) {
    if (extent < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= extent;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename T>
bool all_finite(std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* where) {
  if (!all_finite<T>(t.values())) {
    throw NumericError(std::string(where) + ": non-finite value in tensor of shape " +
                       shape_str(t.shape()));
  }
}

template <typename T>
BackwardStats backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a single-element tensor, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss does not depend on any tensor that requires a gradient");
  }

  using NodeT = detail::Node<T>;
  // Iterative post-order DFS; reversing it gives a reverse topological order.
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are created on first accumulation and released once
  // propagated, so a graph may be differentiated again from a clean state.
  for (NodeT* node : order) {
    if (!node->is_leaf) node->grad.clear();
  }
  loss.node()->ensure_grad()[0] += T(1);

  BackwardStats stats;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    ++stats.nodes_visited;
    if (node->is_leaf) continue;
    // A node no consumer reached has a zero gradient and nothing to propagate.
    if (node->backward && node->grad.size() == node->value.size()) node->backward(*node);
    std::vector<T>().swap(node->grad);
  }
  return stats;
}

template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);
template void check_finite<float>(const Tensor<float>&, const char*);
template void check_finite<double>(const Tensor<double>&, const char*);
template BackwardStats backward<float>(const Tensor<float>&);
template BackwardStats backward<double>(const Tensor<double>&);

}  // namespace nlvae
