#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <deque>
#include <unordered_map>
#include <vector>

#include "oreo/numerics/param.hpp"
#include "oreo/numerics/tensor.hpp"

namespace oreo::num {

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Operation-level reverse-mode tape. Each recorded node owns its forward value
// and, when any input needs a gradient, a closure that pushes the node's
// gradient into its inputs. backward() replays closures in reverse order and
// accumulates leaf gradients into the bound Parameters.
class Tape {
 public:
  // Receives the gradient of the node's output.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // A free leaf that collects a gradient but is not bound to a Parameter.
  Var variable(Tensor value);
  // Parameter leaf; the same Parameter always maps to the same node.
  Var param(Parameter& p);

  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
  }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  // Gradient buffer for v, allocated on first use; null if v needs no gradient.
  Tensor* grad_buffer(Var v);
  // Gradient of v after backward(); zeros when nothing flowed into it.
  Tensor grad(Var v) const;

  void backward(Var loss);
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

}  // namespace oreo::num
