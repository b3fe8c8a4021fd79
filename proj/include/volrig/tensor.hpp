#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace volrig::nn {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Graph node. Values are immutable once an op has produced them; only leaves
/// (parameters, running statistics) are mutated, and only between iterations.
template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool released = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Disables graph recording in its scope (inference).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

/// Dense row-major tensor handle with shared ownership of its node.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static BasicTensor zeros(const Shape& shape, bool requires_grad = false) {
    return from(shape, std::vector<T>(numel(shape), T(0)), requires_grad);
  }
  static BasicTensor full(const Shape& shape, T v, bool requires_grad = false) {
    return from(shape, std::vector<T>(numel(shape), v), requires_grad);
  }
  static BasicTensor from(const Shape& shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != numel(shape))
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node<T>>();
    n->shape = shape;
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    n->op = "leaf";
    return BasicTensor(std::move(n));
  }
  static BasicTensor scalar(T v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i < 0 ? i + rank() : i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->value.size(); }
  std::span<const T> values() const { return node_->value; }
  /// Leaves only.
  std::span<T> mutable_values() {
    if (!node_->leaf) throw std::logic_error("only leaf tensors can be mutated");
    return node_->value;
  }
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }
  T item() const {
    if (size() != 1) throw ShapeError("item() on a tensor with " + std::to_string(size()) + " elements");
    return node_->value[0];
  }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Copy of the values as a new leaf, cut from the graph.
  BasicTensor detach() const { return from(shape(), node_->value, false); }

 private:
  std::shared_ptr<Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Wraps freshly computed values into a tensor, recording the backward closure when
/// gradient mode is on and any parent needs a gradient.
template <class T>
BasicTensor<T> make_result(const std::string& op, Shape shape, std::vector<T> values,
                           std::vector<std::shared_ptr<Node<T>>> parents, std::function<void(Node<T>&)> backward) {
  for (const T& v : values) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite value produced by " + op);
  }
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->op = op;
  const bool needs = grad_enabled() && std::any_of(parents.begin(), parents.end(), [](const auto& p) {
                       return p && p->requires_grad;
                     });
  if (needs) {
    n->requires_grad = true;
    n->leaf = false;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return BasicTensor<T>(std::move(n));
}

/// Reverse-mode accumulation from a scalar. Leaf gradients accumulate; the graph is
/// released afterwards and cannot be traversed again.
template <class T>
void backward(const BasicTensor<T>& loss) {
  if (loss.size() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  auto root = loss.node();
  if (root->released) throw std::logic_error("backward through a graph that was already released");
  if (!root->requires_grad) return;
  if (root->leaf) {
    root->ensure_grad()[0] += T(1);
    return;
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p && p->requires_grad && !p->leaf && !seen.count(p)) {
        if (p->released) throw std::logic_error("backward through a graph that was already released");
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    n->ensure_grad();
    for (auto& p : n->parents)
      if (p && p->requires_grad) p->ensure_grad();
    if (n->backward) n->backward(*n);
  }
  for (Node<T>* n : order) {
    n->parents.clear();
    n->backward = nullptr;
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->released = true;
  }
}

}  // namespace volrig::nn
