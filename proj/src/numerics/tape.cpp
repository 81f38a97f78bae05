#include "oreo/numerics/tape.hpp"

#include "oreo/error.hpp"
#include "oreo/numerics/kernels.hpp"

namespace oreo::num {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.external = &p.value;
  n.requires_grad = p.trainable;
  n.param = p.trainable ? &p : nullptr;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) {
    if (in.tape_ != this) throw Error("tape: input recorded on a different tape");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.external ? *n.external : n.value;
}

Tensor* Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(value(v).shape());
    n.has_grad = true;
  }
  return &n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  return Tensor(value(v).shape());
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(value(loss).shape()));
  }
  if (Tensor* g = grad_buffer(loss)) (*g)[0] += 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) {
      kernels::axpy(1.0, n.grad.ptr(), n.param->grad.ptr(), n.grad.size());
    }
  }
}

}  // namespace oreo::num
