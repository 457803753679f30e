// Copyright 2026 The scan-ocr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "scan/errors.hpp"

namespace scan {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first touched by backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  bool is_leaf() const { return !backward; }

  T* grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad.data();
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Disables graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

/// Dense row-major tensor with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage. Results of
/// differentiable ops remember their inputs so that `backward` can run the
/// recorded computation in reverse.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodeType = detail::Node<T>;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
      : node_(std::make_shared<NodeType>()) {
    check_shape(shape);
    node_->data.assign(numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<NodeType>()) {
    check_shape(shape);
    if (values.size() != numel(shape)) {
      throw ShapeError("tensor: " + std::to_string(values.size()) +
                       " values for shape " + to_string(shape));
    }
    node_->data = std::move(values);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
  }

  explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // Writable view; only meaningful for leaves (parameters, inputs).
  std::span<T> mutable_data() { return node_->data; }

  T item() const {
    if (size() != 1) {
      throw ShapeError("item() on tensor of shape " + to_string(shape()));
    }
    return node_->data[0];
  }

  T operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->grad_buffer();
    return node_->grad;
  }
  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  const char* op_name() const { return node_->op; }
  NodeType* node() const { return node_.get(); }
  const std::shared_ptr<NodeType>& node_ptr() const { return node_; }

 private:
  static void check_shape(const Shape& shape) {
    for (std::size_t extent : shape) {
      if (extent == 0) throw ShapeError("tensor: zero extent in " + to_string(shape));
    }
  }

  std::shared_ptr<NodeType> node_;
};

/// Builds the result of an op. The node records its parents only when grad
/// mode is on and at least one input requires a gradient.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::initializer_list<Tensor<T>> inputs,
                      std::function<void(detail::Node<T>&)> backward) {
  for (const T& v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; intermediate gradients are reset on every call.
template <typename T>
void backward(const Tensor<T>& loss) {
  using NodeT = detail::Node<T>;
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward: loss does not depend on any parameter");
  }

  // Iterative post-order DFS; 1 = on stack, 2 = done.
  std::vector<NodeT*> order;
  std::unordered_map<NodeT*, int> state;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  state[loss.node()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* parent = node->parents[next++].get();
      if (!parent->requires_grad) continue;
      int& s = state[parent];
      if (s == 1) throw std::logic_error("backward: cycle in computation graph");
      if (s == 0) {
        s = 1;
        stack.emplace_back(parent, 0);
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeT* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), T(0));
  }
  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

/// Copies values into a tensor of a different scalar type (no graph).
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& in) {
  std::vector<To> out(in.data().begin(), in.data().end());
  return Tensor<To>(in.shape(), std::move(out));
}

}  // namespace scan
