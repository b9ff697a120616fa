#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records every operation applied to Vars. Gradients of a scalar are
// obtained with Tape::backward(). Higher-order derivatives are never taken by
// the tape itself; callers that need a derivative as a differentiable quantity
// (the compatibility-function gradient) spell it out with ordinary ops.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace infocon::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  // Zero matrix of the right shape if nothing flowed into this node.
  Matrix grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Trainable tensor. Gradients accumulate into `grad` on Tape::backward().
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var input(Matrix value);  // differentiable leaf, mostly for tests
  Var param(Param& p);

  void backward(const Var& loss);
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // Op-construction interface.
  Var push(Matrix value, bool requires_grad);
  void set_backward(const Var& out, std::function<void()> fn);
  const Matrix& value(int id) const { return nodes_[id]->value; }
  bool requires_grad(int id) const { return nodes_[id]->requires_grad; }
  bool has_grad(int id) const { return nodes_[id]->grad.size() > 0; }
  const Matrix& grad_ref(int id) const { return nodes_[id]->grad; }
  Matrix& accum(int id);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> backward;
    Param* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<std::unique_ptr<Node>> nodes_;
  bool grad_enabled_;
};

// ---- elementwise and algebraic ops ----

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);
Var add_row(const Var& a, const Var& row);  // broadcast 1xC row over rows
Var mul_col(const Var& a, const Var& col);  // scale row i by col(i)
Var div_col(const Var& a, const Var& col);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var gelu(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi);

// ---- reductions ----

Var sum(const Var& a);
// Scalar sum of w .* a for a constant weight matrix w.
Var weighted_sum(const Var& a, const Matrix& w);
Var row_sum(const Var& a);
Var row_dot(const Var& a, const Var& b);
// Row L2 norms; sqrt(|x|^2 + eps). With eps = 0 the gradient at a zero row is 0.
Var row_norm(const Var& a, double eps = 0.0);
Var row_normalize(const Var& a);

// ---- structural ops ----

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Index start, Index count);
// Row gather; index -1 yields a zero row.
Var gather_rows(const Var& a, const std::vector<int>& idx);
// Reinterpret a 1x(r*c) row as an r x c matrix in row-major order.
Var reshape_row(const Var& a, Index rows, Index cols);

// ---- neural-network ops ----

Var softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// Ragged batch of sequences stored back to back along rows.
struct SeqLayout {
  std::vector<int> offsets;
  std::vector<int> lengths;
  int total_rows() const;
  static SeqLayout single(int length);
};

// Multi-head causal self-attention on packed [Q | K | V] of shape N x 3D.
Var causal_attention(const Var& qkv, const SeqLayout& layout, int num_heads);

// Straight-through selection. Forward returns table.row(hard[i]) for each row
// (bit-exact). Backward treats the output as probs * SG(table): gradient flows
// into probs only. When `frozen_offset` is non-null the forward value is
// probs * table + offset instead, which is the smooth surrogate used by
// finite-difference checks.
Var straight_through(const Var& probs, const Matrix& table, const std::vector<int>& hard,
                     const Matrix* frozen_offset = nullptr);

// Per-row matrix-vector products. Row n of `w_flat` holds an out x in matrix
// in row-major order. Computes y_n = W_n x_n, or W_n^T x_n when transposed.
Var batched_matvec(const Var& w_flat, const Var& x, Index out, Index in, bool transposed);

}  // namespace infocon::ad
