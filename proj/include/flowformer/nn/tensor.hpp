#pragma once

// Dense n-d tensors with a dynamic reverse-mode graph.
//
// A Tensor is a shared handle to a Node. Every op that sees an input with
// requires_grad (while grad mode is on) records its parents and a backward
// closure on the output node; backward() walks that graph in reverse
// topological order. Parameters are leaf tensors whose grads accumulate
// until zeroed.

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "flowformer/error.hpp"

namespace flowformer::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

namespace detail {
inline thread_local bool grad_mode = true;
}

inline bool grad_enabled() { return detail::grad_mode; }

/// Disables graph recording for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (numel(shape) != data.size())
      throw ShapeError("tensor data size " + std::to_string(data.size()) +
                       " does not match shape " + to_string(shape));
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::vector<T>& values() { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<T> grad() { return node_->ensure_grad(); }
  std::span<const T> grad() const { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->data[0];
  }

  /// Copy of the values, detached from any graph.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds an op output. The backward closure is kept only when some input
/// requires grad and grad mode is on.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  Tensor<T> out(std::move(shape), std::move(data), false);
  if (!grad_enabled()) return out;
  bool needs = false;
  for (auto* t : inputs) needs = needs || t->requires_grad();
  if (!needs) return out;
  auto* n = out.node();
  n->requires_grad = true;
  for (auto* t : inputs) n->parents.push_back(t->node_ptr());
  n->backward_fn = std::move(backward_fn);
  return out;
}

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  Tensor<T> out(std::move(shape), std::move(data), false);
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (!needs) return out;
  auto* n = out.node();
  n->requires_grad = true;
  for (const auto& t : inputs) n->parents.push_back(t.node_ptr());
  n->backward_fn = std::move(backward_fn);
  return out;
}

/// Reverse-mode sweep from a scalar. Grads accumulate into every reachable
/// node that requires grad.
template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1)
    throw ShapeError("backward() needs a scalar, got shape " + to_string(loss.shape()));
  if (!loss.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  // interior grads belong to a single sweep; only leaves accumulate
  for (Node<T>* n : order)
    if (n->backward_fn) n->grad.clear();
  loss.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

}  // namespace flowformer::nn
