#include "mtvrp/autodiff/tape.hpp"

namespace mtvrp::ad {

std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::mul_const: return "mul_const";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softplus: return "softplus";
    case OpKind::log: return "log";
    case OpKind::exp: return "exp";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::linear: return "linear";
    case OpKind::masked_softmax: return "masked_softmax";
    case OpKind::masked_log_softmax: return "masked_log_softmax";
    case OpKind::attention: return "attention";
    case OpKind::gather: return "gather";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::mean_rows: return "mean_rows";
    case OpKind::repeat_rows: return "repeat_rows";
    case OpKind::col: return "col";
    case OpKind::scale_rows: return "scale_rows";
    case OpKind::row_normalize: return "row_normalize";
    case OpKind::layer_norm: return "layer_norm";
  }
  return "?";
}

const Tensor& Var::value() const { return tape->value(*this); }

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument("Var does not belong to this tape");
  }
  return nodes_[v.id];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.kind = OpKind::leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(OpKind kind, std::vector<int> inputs, Tensor value, BackwardFn fn) {
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  for (int id : inputs) n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == n.value.size() && n.grad.shape() == n.value.shape()) return n.grad;
  return Tensor(n.value.shape(), 0.0);
}

void Tape::backward(Var loss) {
  if (backward_done_) throw std::logic_error("backward() already ran on this tape");
  const Node& l = node(loss);
  if (l.value.size() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_str(l.value.shape()));
  backward_done_ = true;
  if (!l.requires_grad) return;
  grad_buffer(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, id);
  }
}

}  // namespace mtvrp::ad
