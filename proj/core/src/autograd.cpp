#include "catsnn/autograd.hpp"

#include <string>

namespace catsnn {

const Tensor& Var::value() const {
  if (!graph_) throw StateError("use of an unbound Var");
  return graph_->value(id_);
}

bool Var::requires_grad() const { return graph_ && graph_->requires_grad(id_); }

Var Graph::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw StateError("non-finite value fed into the graph");
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw StateError(std::string("non-finite value produced by ") + op);
  Node node;
  node.op = op;
  node.value = std::move(value);
  bool needs = false;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.graph() != this) throw ContractError(std::string(op) + ": input belongs to another graph");
    node.inputs.push_back(in.id());
    needs = needs || nodes_[in.id()].requires_grad;
  }
  node.requires_grad = needs && grad_enabled_;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(const Var& root) {
  if (root.graph() != this) throw ContractError("backward: root belongs to another graph");
  Node& top = nodes_[root.id()];
  if (top.value.size() != 1)
    throw ContractError("backward: root must be scalar, got shape " + to_string(top.value.shape()));
  for (auto& n : nodes_) n.grad.reset();
  top.grad = Tensor(top.value.shape(), 1.0);

  std::vector<Tensor*> grad_in;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.grad || !node.backward) continue;
    grad_in.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      Node& in = nodes_[node.inputs[k]];
      if (!in.requires_grad) continue;
      if (!in.grad) in.grad = Tensor(in.value.shape(), 0.0);
      grad_in[k] = &*in.grad;
    }
    node.backward(*node.grad, grad_in);
  }
}

const Tensor* Graph::grad(const Var& v) const {
  const auto& node = nodes_.at(v.id());
  return node.grad ? &*node.grad : nullptr;
}

Tensor Graph::grad_or_zeros(const Var& v) const {
  if (const Tensor* g = grad(v)) return *g;
  return Tensor(v.shape(), 0.0);
}

}  // namespace catsnn
