#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "macflow/tensor.hpp"

namespace macflow {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so walking the
// node list backwards is a valid topological order for backpropagation.
// Constants never receive gradients; a node requires a gradient iff one of
// its inputs does.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  // Seeds d(loss)/d(loss) = 1 and propagates. The loss must be a 1x1 tensor.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return value(v.id()); }
  // Gradient accumulated by the last backward(); zeros if the node was not
  // reached.
  Tensor gradient(Var v) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Tensor& grad(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

namespace ad {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// x (n x m) plus a 1 x m row broadcast over rows.
Var add_row(Var x, Var row);
// x (n x m) times a 1 x m row broadcast over rows.
Var mul_row(Var x, Var row);
// x (n x m) times an n x 1 column broadcast over columns.
Var mul_col(Var x, Var col);
Var gelu(Var x);
Var relu(Var x);
Var tanh(Var x);
// Per-row standardization (x - mean) / sqrt(var + eps), no gain or offset.
Var normalize_rows(Var x, double eps);
Var square(Var x);
Var sum(Var x);
Var mean(Var x);
Var row_sum(Var x);
Var softmax_rows(Var x);
Var concat_columns(std::span<const Var> parts);
Var slice_columns(Var x, std::size_t start, std::size_t count);
// Value of x with the gradient path cut.
Var stop_gradient(Var x);

}  // namespace ad

double gelu_value(double x);

}  // namespace macflow
