#include "vtdtsn/tape.hpp"

#include "vtdtsn/errors.hpp"

namespace vtdtsn {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamTensor& p) {
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
  bool needs = false;
  for (const auto& p : parents) {
    if (p.tape() != this) throw std::logic_error("op mixes vars from different tapes");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(std::size_t id) const {
  const auto& n = nodes_.at(id);
  if (n.grad.empty()) throw std::logic_error("no gradient recorded for node " + std::to_string(id));
  return n.grad;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::logic_error("backward root belongs to another tape");
  if (nodes_[root.id()].value.size() != 1) {
    throw ShapeError("backward root must be a single element, got " +
                     shape_string(nodes_[root.id()].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(root.id())[0] = 1.0;

  for (std::size_t i = root.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, nodes_[i].grad);
    if (n.param != nullptr) {
      auto& target = n.param->grad;
      if (target.empty()) target = Tensor(n.param->value.shape(), 0.0);
      for (std::size_t k = 0; k < target.size(); ++k) target[k] += nodes_[i].grad[k];
    }
  }
}

}  // namespace vtdtsn
