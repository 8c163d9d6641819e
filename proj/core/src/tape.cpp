#include "sluadv/tape.hpp"

namespace sluadv::nn {

Var Tape::push(const char* op, Matrix value, bool requires_grad, Backward backward) {
  if (!value.allFinite()) throw NumericError(std::string("non-finite value produced by ") + op);
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return push("constant", std::move(value), false, nullptr); }

Var Tape::parameter(const Parameter& p, bool trainable) {
  Var v = push("parameter", p.value, trainable, nullptr);
  nodes_.back().param = &p;
  return v;
}

Var Tape::record(const char* op, Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (Var in : inputs) needs = needs || nodes_.at(in.index).requires_grad;
  return push(op, std::move(value), needs, std::move(backward));
}

Var Tape::record(const char* op, Matrix value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (Var in : inputs) needs = needs || nodes_.at(in.index).requires_grad;
  return push(op, std::move(value), needs, std::move(backward));
}

Matrix* Tape::grad_buffer(Var v) {
  Node& node = nodes_.at(v.index);
  if (!node.requires_grad) return nullptr;
  if (!node.has_grad) {
    node.grad.setZero(node.value.rows(), node.value.cols());
    node.has_grad = true;
  }
  return &node.grad;
}

void Tape::backward(Var root) {
  Node& top = nodes_.at(root.index);
  if (top.value.size() != 1) throw ShapeError("backward() needs a scalar root");
  if (!top.requires_grad) return;
  top.grad = Matrix::Ones(1, 1);
  top.has_grad = true;
  for (std::size_t i = root.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad) continue;
    if (!node.grad.allFinite()) throw NumericError("non-finite gradient during backward");
    if (node.param) {
      node.param->grad += node.grad;
    } else if (node.backward) {
      node.backward(*this, node.grad);
    }
  }
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.size() != 1) throw ShapeError("scalar() on a non-scalar node");
  return m(0, 0);
}

}  // namespace sluadv::nn
