#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "vtdtsn/tensor.hpp"

namespace vtdtsn {

// A named trainable array. `grad` is empty until the owning store allocates it.
struct ParamTensor {
  std::string name;
  Tensor value;
  Tensor grad;
};

class Tape;

// Handle to one recorded value on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  // Gradient of the last backward() root with respect to this value.
  const Tensor& grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode differentiation tape. Nodes are appended in evaluation order,
// so reverse insertion order is a valid topological order for backward().
// A tape is single-writer; parameters bound through param() are only read
// during recording and only written by backward().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Var constant(Tensor value);
  Var variable(Tensor value);
  Var param(ParamTensor& p);

  // Appends an op result. `fn` is dropped when no parent needs a gradient.
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn fn);

  // Seeds d(root)/d(root) = 1 for a single-element root and propagates.
  // Gradients of bound parameters are added to ParamTensor::grad.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Zero-initialized on first use; for use inside BackwardFn.
  Tensor& grad_buffer(std::size_t id);
  Tensor& grad_buffer(Var v) { return grad_buffer(v.id()); }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    ParamTensor* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

}  // namespace vtdtsn
