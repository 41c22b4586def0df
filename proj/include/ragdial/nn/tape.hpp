#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <unordered_map>

#include "ragdial/nn/parameter_store.hpp"
#include "ragdial/nn/tensor.hpp"

namespace ragdial::nn {

class Tape;

// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode autodiff tape. Every op appends a node holding its forward
// value and a closure that pushes the node's gradient to its inputs.
// Parameter leaves flush their accumulated gradient into the owning
// ParameterStore slot, so gradients accumulate across backward calls until
// ParameterStore::zero_grad().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a stored parameter; repeated calls return the same node.
  Var parameter(Parameter& p);
  // Read-only view of a parameter; never receives gradients.
  Var parameter(const Parameter& p);
  // Leaf that is differentiable but not bound to a store (tests, probes).
  Var leaf(Tensor value);

  // Records an op output. `fn` is dropped when no input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer for a node, allocated as zeros on first access.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }

  void backward(Var loss);

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Parameter* param = nullptr;
    const Tensor* external = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_ids_;
  std::unordered_map<const Parameter*, std::size_t> const_param_ids_;
  bool grad_enabled_;
};

}  // namespace ragdial::nn
