#include "ocgan/nn/autodiff.hpp"

#include <stdexcept>
#include <unordered_set>

namespace ocgan::nn {

Var Var::leaf(Parameter& p) {
  Var v;
  v.node_ = std::make_shared<Node>();
  v.node_->value = p.value;  // shares the parameter's buffer
  v.node_->requires_grad = true;
  v.node_->param = &p;
  return v;
}

Var Var::grad_leaf(Tensor value) {
  Var v;
  v.node_ = std::make_shared<Node>();
  v.node_->value = std::move(value);
  v.node_->requires_grad = true;
  return v;
}

Var Var::make(Tensor value, std::vector<NodePtr> inputs, std::function<void(Node&)> bwd) {
  Var v;
  v.node_ = std::make_shared<Node>();
  v.node_->value = std::move(value);
  for (auto& in : inputs)
    if (in->requires_grad) v.node_->requires_grad = true;
  if (v.node_->requires_grad) {
    v.node_->inputs = std::move(inputs);
    v.node_->backward_fn = std::move(bwd);
  }
  return v;
}

void backward(const Var& scalar_output) {
  if (!scalar_output.defined()) throw std::logic_error("backward() on undefined Var");
  Node* root = scalar_output.node().get();
  if (root->value.size() != 1) throw std::logic_error("backward() expects a scalar output");
  if (!root->requires_grad) return;

  // Iterative post-order DFS; order is reversed for the backward sweep.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node* child = node->inputs[idx++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad.fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->grad.defined()) continue;  // unreached branch
    if (n->backward_fn) n->backward_fn(*n);
    if (n->param) {
      const Scalar* g = n->grad.data();
      Scalar* acc = n->param->grad.data();
      for (long i = 0; i < n->grad.size(); ++i) acc[i] += g[i];
    }
  }
}

Var detach(const Var& v) { return Var(v.value()); }

}  // namespace ocgan::nn
