#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mdmer/errors.hpp"

namespace mdmer::nn {

#ifndef NDEBUG
inline constexpr bool kCheckNumeric = true;
#else
inline constexpr bool kCheckNumeric = false;
#endif

namespace detail {

template <typename T>
struct Node {
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on demand, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::size_t size() const { return value.size(); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

inline std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), static_cast<std::size_t>(1),
                         std::multiplies<>());
}

}  // namespace detail

/// Dense row-major tensor with an optional gradient slot. Copies are shallow:
/// a Tensor is a handle to a graph node.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    auto node = std::make_shared<detail::Node<T>>();
    node->value.assign(detail::shape_product(shape), T(0));
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor from(std::vector<std::size_t> shape, std::vector<T> values,
                     bool requires_grad = false) {
    if (detail::shape_product(shape) != values.size()) {
      throw ShapeError("tensor data length does not match shape");
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t size() const { return node_->value.size(); }

  std::vector<T>& value() { return node_->value; }
  const std::vector<T>& value() const { return node_->value; }

  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<T>& grad() const { return node_->grad; }

  bool requires_grad() const { return node_->requires_grad; }

  T item() const {
    if (size() != 1) throw ShapeError("item() on a non-scalar tensor");
    return node_->value[0];
  }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  /// Reverse-mode sweep from this (scalar) tensor. `seed` is the gradient of
  /// the final objective with respect to this value.
  void backward(T seed = T(1)) const {
    if (size() != 1) throw ShapeError("backward() requires a scalar root");
    if (!node_->requires_grad) return;

    // Iterative post-order topological sort over grad-requiring nodes.
    std::vector<detail::Node<T>*> order;
    std::unordered_set<detail::Node<T>*> visited;
    struct Frame {
      detail::Node<T>* node;
      std::size_t next_parent;
    };
    std::vector<Frame> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
      Frame& top = stack.back();
      if (top.next_parent < top.node->parents.size()) {
        detail::Node<T>* parent = top.node->parents[top.next_parent++].get();
        if (parent->requires_grad && !visited.count(parent)) {
          visited.insert(parent);
          stack.push_back({parent, 0});
        }
      } else {
        order.push_back(top.node);
        stack.pop_back();
      }
    }

    node_->ensure_grad();
    node_->grad[0] += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward) (*it)->backward(**it);
    }
  }

  detail::Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node<T>>& handle() const { return node_; }

  static Tensor wrap(std::shared_ptr<detail::Node<T>> node) { return Tensor(std::move(node)); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node<T>> node_;
};

namespace detail {

template <typename T>
void check_finite(const Node<T>& node, const char* op) {
  if constexpr (kCheckNumeric) {
    for (T v : node.value) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw NumericFault(std::string("non-finite value produced by ") + op);
      }
    }
  }
}

/// Build an op node: `shape`/`values` hold the forward result, `parents` are
/// the inputs, and `backward` propagates this node's grad into them. The
/// closure is only attached when some parent needs gradients.
template <typename T>
Tensor<T> make_op(const char* name, std::vector<std::size_t> shape, std::vector<T> values,
                  std::vector<std::shared_ptr<Node<T>>> parents,
                  std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  node->requires_grad = needs;
  if (needs) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  check_finite(*node, name);
  return Tensor<T>::wrap(std::move(node));
}

}  // namespace detail

}  // namespace mdmer::nn
