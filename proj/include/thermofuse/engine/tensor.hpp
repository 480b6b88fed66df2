#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "thermofuse/errors.hpp"

namespace thermofuse {

// All activations and feature maps are 4-D: batch, channels, height, width.
struct Shape {
  int b = 0, c = 0, h = 0, w = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(b) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  bool operator==(const Shape& o) const = default;

  std::string str() const {
    return "(" + std::to_string(b) + ", " + std::to_string(c) + ", " +
           std::to_string(h) + ", " + std::to_string(w) + ")";
  }

  void validate() const {
    if (b < 1 || c < 1 || h < 1 || w < 1)
      throw ShapeError("tensor dims must be positive, got " + str());
  }
};

inline constexpr Shape kScalarShape{1, 1, 1, 1};

// One vertex of the differentiation graph. backprop reads this node's
// gradient and adds contributions into the parents' gradients; it captures
// parents only by raw pointer (the parents vector owns them) so node
// destruction never cycles.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(const TensorNode&)> backprop;

  bool is_leaf() const { return parents.empty(); }
};

#ifndef NDEBUG
inline void debug_check_finite(const std::vector<double>& xs, const char* what) {
  for (double x : xs)
    if (!std::isfinite(x)) throw ValueError(std::string(what) + ": non-finite value");
}
#else
inline void debug_check_finite(const std::vector<double>&, const char*) {}
#endif

// Value-semantics handle on a graph node. Copies share the node. Training
// arithmetic is 64-bit throughout so finite-difference checks are meaningful.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s) {
    s.validate();
    Tensor t;
    t.node_ = std::make_shared<TensorNode>();
    t.node_->shape = s;
    t.node_->value.assign(s.count(), 0.0);
    t.node_->grad.assign(s.count(), 0.0);
    return t;
  }

  static Tensor from(Shape s, std::vector<double> values) {
    s.validate();
    if (values.size() != s.count())
      throw ShapeError("tensor value count does not match shape " + s.str());
    Tensor t = zeros(s);
    t.node_->value = std::move(values);
    return t;
  }

  static Tensor scalar(double v) { return from(kScalarShape, {v}); }

  // Graph-building constructor used by the ops: value is filled by the
  // caller afterwards.
  static Tensor op(Shape s, std::vector<std::shared_ptr<TensorNode>> parents,
                   std::function<void(const TensorNode&)> backprop) {
    Tensor t = zeros(s);
    t.node_->parents = std::move(parents);
    t.node_->backprop = std::move(backprop);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return checked().shape; }
  std::size_t count() const { return checked().shape.count(); }
  bool is_leaf() const { return checked().is_leaf(); }

  std::vector<double>& values() { return checked().value; }
  const std::vector<double>& values() const { return checked().value; }
  std::vector<double>& grad() { return checked().grad; }
  const std::vector<double>& grad() const { return checked().grad; }

  double item() const {
    if (count() != 1) throw ShapeError("item: tensor is not scalar, shape " + shape().str());
    return checked().value[0];
  }

  void zero_grad() const {
    auto& g = checked().grad;
    std::fill(g.begin(), g.end(), 0.0);
  }

  // Reverse topological sweep from a scalar. Intermediate gradients are
  // owned by this call (reset on entry); leaf gradients accumulate across
  // calls, so two sweeps equal one sweep of the doubled loss.
  void backward() const {
    TensorNode& root = checked();
    if (root.shape.count() != 1)
      throw ShapeError("backward: loss must be scalar, shape " + root.shape.str());
    std::vector<TensorNode*> order = topo_order(&root);
    for (TensorNode* n : order)
      if (!n->is_leaf()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
    root.grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backprop) (*it)->backprop(**it);
      debug_check_finite((*it)->grad, "backward");
    }
  }

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  TensorNode& checked() const {
    if (!node_) throw InvariantError("use of default-constructed tensor");
    return *node_;
  }

  // Post-order depth-first walk: every node appears after all its parents,
  // root last. Iterative to survive deep chains.
  static std::vector<TensorNode*> topo_order(TensorNode* root) {
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> done;
    std::vector<std::pair<TensorNode*, std::size_t>> stack{{root, 0}};
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (done.count(node)) {
        stack.pop_back();
        continue;
      }
      if (next < node->parents.size()) {
        TensorNode* parent = node->parents[next++].get();
        if (!done.count(parent)) stack.emplace_back(parent, 0);
      } else {
        done.insert(node);
        order.push_back(node);
        stack.pop_back();
      }
    }
    return order;
  }

  std::shared_ptr<TensorNode> node_;
};

// A trainable leaf with the metadata Glorot initialization and checkpoints
// need. Names must be unique within one model.
struct Parameter {
  std::string name;
  Tensor tensor;
  int fan_in = 0;
  int fan_out = 0;
};

}  // namespace thermofuse
