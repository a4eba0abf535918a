#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "red/numcore/tensor.hpp"

namespace red::nc {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

/// One value in the dynamic computation graph.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  bool backpropagated = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;

  /// Zero-initialized gradient buffer matching `value`.
  Tensor& grad_buffer();
  bool has_grad() const noexcept { return grad.size() == value.size() && !grad.empty(); }
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  /// Non-differentiable input.
  static Var constant(Tensor value);
  /// Differentiable leaf (parameters, or inputs under test).
  static Var leaf(Tensor value);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  /// Accumulated gradient; an all-zero tensor when nothing flowed here.
  Tensor grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool defined() const noexcept { return static_cast<bool>(node_); }
  const NodePtr& node() const noexcept { return node_; }

  void zero_grad();

 private:
  NodePtr node_;
};

/// Builds a result node. Parents and the backward closure are only kept when
/// gradient recording is on and at least one parent requires a gradient.
Var make_result(Tensor value, std::vector<Var> parents, BackwardFn backward);

/// Reverse-mode accumulation from a 1x1 loss into every reachable node that
/// requires a gradient. A loss may only be backpropagated once.
void backward(const Var& loss);

bool grad_enabled() noexcept;

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace red::nc
