#include "ragdial/nn/tape.hpp"

#include <stdexcept>

#include "ragdial/common/errors.hpp"

namespace ragdial::nn {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
  Node& n = nodes_.emplace_back();
  n.param = &p;
  n.requires_grad = grad_enabled_;
  const std::size_t id = nodes_.size() - 1;
  param_ids_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::parameter(const Parameter& p) {
  if (auto it = const_param_ids_.find(&p); it != const_param_ids_.end()) return Var(this, it->second);
  Node& n = nodes_.emplace_back();
  n.external = &p.value;
  const std::size_t id = nodes_.size() - 1;
  const_param_ids_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  bool needs = false;
  if (grad_enabled_) {
    for (const Var& v : inputs) {
      if (&v.tape() != this) throw std::logic_error("op mixes variables from different tapes");
      needs = needs || nodes_[v.id()].requires_grad;
    }
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.param) return n.param->value;
  return n.external ? *n.external : n.value;
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(value(id).shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!loss.valid() || &loss.tape() != this || nodes_.empty()) {
    throw std::logic_error("backward called before any forward pass was recorded");
  }
  if (value(loss.id()).size() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + shape_string(value(loss.id()).shape()));
  }
  if (!nodes_[loss.id()].requires_grad) return;
  grad(loss.id())[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.has_grad) continue;
    if (n.param) {
      auto dst = n.param->grad.values();
      const auto src = n.grad.values();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

}  // namespace ragdial::nn
