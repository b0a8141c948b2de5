#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ocgan/nn/tensor.hpp"

namespace ocgan::nn {

/// Trainable weight with a persistent gradient accumulator. Optimizers
/// update `value` in place; backward() adds into `grad`.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor::zeros(value.shape());
  }
  void zero_grad() { grad.zero(); }
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One record in the define-by-run graph. `backward_fn` distributes
/// `grad` into the grads of `inputs`.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily during backward()
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward_fn;
  Parameter* param = nullptr;  // set for parameter leaves

  Tensor& ensure_grad() {
    if (!grad.defined()) grad = Tensor::zeros(value.shape());
    return grad;
  }
};

/// Handle to a graph node. Cheap to copy.
class Var {
 public:
  Var() = default;
  /// Constant leaf (no gradient tracking).
  explicit Var(Tensor value) : node_(std::make_shared<Node>()) { node_->value = std::move(value); }
  /// Leaf bound to a parameter: backward() accumulates into p.grad.
  static Var leaf(Parameter& p);
  /// Leaf that tracks gradients without being a Parameter (for tests).
  static Var grad_leaf(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::vector<int>& shape() const { return node_->value.shape(); }
  NodePtr node() const { return node_; }

  static Var make(Tensor value, std::vector<NodePtr> inputs, std::function<void(Node&)> bwd);

 private:
  NodePtr node_;
};

/// Reverse-mode sweep from a scalar output. Accumulates into every
/// reachable Parameter's grad.
void backward(const Var& scalar_output);

/// Same value, gradient flow cut.
Var detach(const Var& v);

}  // namespace ocgan::nn
