#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "../errors.hpp"

namespace hei::diff {

template <class S>
using VecX = Eigen::Array<S, Eigen::Dynamic, 1>;

using Shape = std::vector<Eigen::Index>;

inline Eigen::Index numel(const Shape& s) {
  Eigen::Index n = 1;
  for (const auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// One node of the dynamically built computation graph. `inputs` keeps the
// producing subgraph alive; `backprop` reads this node's grad and
// accumulates into the inputs' grads. The tape is rebuilt every training
// step, so nodes never outlive one iteration.
template <class S>
struct TensorNode {
  Shape shape;
  VecX<S> values;
  VecX<S> grad;  // lazily allocated, zero-initialized
  bool requires_grad = false;
  bool backward_ran = false;  // set on the loss root by backward()
  std::vector<std::shared_ptr<TensorNode<S>>> inputs;
  std::function<void(TensorNode<S>&)> backprop;

  void ensure_grad() {
    if (grad.size() == 0) grad = VecX<S>::Zero(values.size());
  }
};

// Value-semantics handle to a graph node. Copies alias the same node, which
// is what both parameter reuse across iterations and graph construction
// want.
template <class S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<TensorNode<S>>();
    t.node_->shape = std::move(shape);
    t.node_->values = VecX<S>::Zero(numel(t.node_->shape));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_values(Shape shape, VecX<S> values, bool requires_grad = false) {
    if (numel(shape) != values.size())
      throw ShapeError("tensor: value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    Tensor t = leaf(std::move(shape), requires_grad);
    t.node_->values = std::move(values);
    return t;
  }

  static Tensor constant(Shape shape, S value) {
    Tensor t = leaf(std::move(shape), false);
    t.node_->values.setConstant(value);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Eigen::Index size() const { return node_->values.size(); }
  Eigen::Index dim(std::size_t i) const { return node_->shape[i]; }

  VecX<S>& values() { return node_->values; }
  const VecX<S>& values() const { return node_->values; }

  // Gradient view; allocates zeros on first access so "never reached by
  // backward" reads as an all-zero gradient.
  VecX<S>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const VecX<S>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad.setZero(); }

  S scalar() const {
    if (size() != 1) throw ShapeError("scalar() on tensor of shape " + shape_str(shape()));
    return node_->values[0];
  }

  std::shared_ptr<TensorNode<S>> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<S>> node_;
};

template <class S>
Tensor<S> make_op(Shape shape, std::vector<Tensor<S>> inputs,
                  std::function<void(TensorNode<S>&)> backprop) {
  Tensor<S> out = Tensor<S>::leaf(std::move(shape), false);
  auto node = out.node();
  for (const auto& in : inputs) {
    node->requires_grad |= in.requires_grad();
    node->inputs.push_back(in.node());
  }
  if (node->requires_grad) node->backprop = std::move(backprop);
  return out;
}

namespace detail {

// Children-before-parents ordering of the subgraph below `root`, iterative
// so deep U-Net tapes cannot blow the call stack.
template <class S>
std::vector<TensorNode<S>*> topo_order(TensorNode<S>* root) {
  std::vector<TensorNode<S>*> order;
  std::unordered_set<TensorNode<S>*> visited;
  std::vector<std::pair<TensorNode<S>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorNode<S>* child = node->inputs[next++].get();
      if (visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Populates grad on every
// requires_grad node reachable from the loss; a second call on the same
// graph is rejected until reset_graph() is used (in practice the tape is
// rebuilt each step instead).
template <class S>
void backward(const Tensor<S>& loss) {
  if (!loss.defined()) throw StateError("backward: undefined tensor");
  if (loss.size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  auto root = loss.node();
  if (root->backward_ran)
    throw StateError("backward: already run on this graph; rebuild the tape or reset_graph()");
  root->backward_ran = true;
  if (!root->requires_grad) return;

  auto order = detail::topo_order<S>(root.get());
  root->ensure_grad();
  root->grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<S>* node = *it;
    if (node->backprop && node->grad.size() != 0) node->backprop(*node);
  }
}

// Clears grads and the backward flag on the whole subgraph, allowing a
// fresh backward() over the same tape.
template <class S>
void reset_graph(const Tensor<S>& root) {
  for (TensorNode<S>* node : detail::topo_order<S>(root.node().get())) {
    node->grad.resize(0);
    node->backward_ran = false;
  }
}

}  // namespace hei::diff
