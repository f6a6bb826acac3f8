#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "flowcast/params.hpp"

namespace flowcast::ad {

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode tape over matrix-valued ops. Nodes are appended in
/// evaluation order, so replaying them backwards is a valid topological
/// order. With recording disabled the tape only evaluates values.
class Tape {
 public:
  using Backward = std::function<void(const Matrix& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to a parameter; backward() adds its gradient to `p.grad`.
  /// The node reads the parameter in place, so `p` must outlive the tape.
  Var param(const Parameter& p);
  /// Leaf whose backward is supplied by the caller (e.g. row lookups that
  /// write straight into a parameter gradient).
  Var leaf(Matrix value, Backward fn);

  /// Appends an op node. `fn` is kept only if recording and some input
  /// needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward fn);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward fn);

  const Matrix& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.param ? n.param->value : n.value;
  }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  /// Gradient accumulator of `v`, allocated as zeros on first use.
  Matrix& grad(Var v);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and runs the tape backwards.
  void backward(Var loss);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    const Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  bool record_;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

// Linear algebra ------------------------------------------------------------
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
/// x * W^T + bias, with W [out, in] and bias [1, out].
Var linear(Var x, Var weight, Var bias);
Var linear(Var x, Var weight);

// Elementwise ---------------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a [1, n] row to every row of `a`.
Var add_row(Var a, Var row);
Var gelu(Var a);
Var silu(Var a);

// Normalization and modulation ----------------------------------------------
/// Per-row layer norm without affine parameters.
Var layer_norm(Var x, double eps = 1e-6);
/// x * (1 + scale) + shift, shift/scale are [1, d] rows.
Var modulate(Var x, Var shift, Var scale);
/// h + gate * y with gate a [1, d] row.
Var gated_residual(Var h, Var gate, Var y);

// Indexing ------------------------------------------------------------------
Var slice_cols(Var a, int begin, int count);
Var slice_rows(Var a, int begin, int count);
Var concat_rows(const std::vector<Var>& parts);
/// out[r] = table[index[r]]
Var gather_rows(Var table, std::vector<int> index);
/// out[r] = x[r] + table[index[r]]; rows with index -1 pass through.
Var add_gathered(Var x, Var table, std::vector<int> index);

// Attention -----------------------------------------------------------------
/// Multi-head scaled dot-product attention. q [n, d], k/v [m, d].
/// If `weights_out` is given it receives the per-head softmax matrices.
Var attention(Var q, Var k, Var v, int n_heads, std::vector<Matrix>* weights_out = nullptr);

// Losses --------------------------------------------------------------------
/// Mean over all elements of (pred - target)^2, as a 1x1 node.
Var mse(Var pred, const Matrix& target);
Var sum_all(Var a);

// Activations used outside the tape (kept identical to the tape versions).
double gelu_value(double x);
double gelu_derivative(double x);

}  // namespace flowcast::ad
