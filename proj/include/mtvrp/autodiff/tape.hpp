#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "mtvrp/autodiff/tensor.hpp"

namespace mtvrp::ad {

enum class OpKind : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  scale,
  mul_const,
  relu,
  tanh,
  sigmoid,
  softplus,
  log,
  exp,
  sum,
  mean,
  linear,
  masked_softmax,
  masked_log_softmax,
  attention,
  gather,
  gather_rows,
  concat_cols,
  concat_rows,
  mean_rows,
  repeat_rows,
  col,
  scale_rows,
  row_normalize,
  layer_norm,
};

std::string_view op_name(OpKind k);

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Append-only record of a computation. Nodes are stored in creation order, which is a
// topological order; backward() visits them once each in reverse.
//
// Single use: backward() may be called once per tape, a second call throws.
class Tape {
 public:
  // Gradient propagation for one node: reads the node's gradient and accumulates into the
  // gradients of its inputs.
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& value(int id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  OpKind kind(Var v) const { return node(v).kind; }
  const std::vector<int>& inputs(Var v) const { return node(v).inputs; }

  // Gradient of the last backward() target w.r.t. v (zeros if v received none).
  Tensor grad(Var v) const;

  void backward(Var loss);
  bool backward_done() const { return backward_done_; }

  std::size_t size() const { return nodes_.size(); }

  // Op-facing API.
  Var record(OpKind kind, std::vector<int> inputs, Tensor value, BackwardFn fn);
  // Gradient buffer for a node, allocated as zeros on first use.
  Tensor& grad_buffer(int id);
  const Tensor& grad_ref(int id) const { return nodes_[id].grad; }

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  const Node& node(Var v) const;

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace mtvrp::ad
