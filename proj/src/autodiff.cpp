#include "flowcast/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "flowcast/errors.hpp"

namespace flowcast::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const Parameter& p) {
  Node n;
  n.param = &p;
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Matrix value, Backward fn) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_;
  if (record_) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward fn) {
  bool needs = false;
  if (record_) {
    for (const Var& v : inputs) needs = needs || nodes_[v.id].needs_grad;
  }
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward fn) {
  bool needs = false;
  if (record_) {
    for (const Var& v : inputs) needs = needs || nodes_[v.id].needs_grad;
  }
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) {
    const Matrix& val = n.param ? n.param->value : n.value;
    n.grad = Matrix::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  require(record_, "backward on a non-recording tape");
  require(value(loss).rows() == 1 && value(loss).cols() == 1, "backward needs a scalar");
  grad(loss).setConstant(1.0);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) {
      n.backward(n.grad);
    } else if (n.param != nullptr) {
      n.param->grad += n.grad;
    }
  }
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul shape mismatch");
  Tape* t = a.tape;
  Matrix out = a.value() * b.value();
  return t->record(std::move(out), {a, b}, [t, a, b](const Matrix& g) {
    if (t->needs_grad(a)) t->grad(a).noalias() += g * t->value(b).transpose();
    if (t->needs_grad(b)) t->grad(b).noalias() += t->value(a).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  require(a.cols() == b.cols(), "matmul_nt shape mismatch");
  Tape* t = a.tape;
  Matrix out = a.value() * b.value().transpose();
  return t->record(std::move(out), {a, b}, [t, a, b](const Matrix& g) {
    if (t->needs_grad(a)) t->grad(a).noalias() += g * t->value(b);
    if (t->needs_grad(b)) t->grad(b).noalias() += g.transpose() * t->value(a);
  });
}

Var linear(Var x, Var weight, Var bias) {
  require(x.cols() == weight.cols(), "linear input width mismatch");
  require(bias.rows() == 1 && bias.cols() == weight.rows(), "linear bias shape mismatch");
  Tape* t = x.tape;
  Matrix out = x.value() * weight.value().transpose();
  out.rowwise() += bias.value().row(0);
  return t->record(std::move(out), {x, weight, bias}, [t, x, weight, bias](const Matrix& g) {
    if (t->needs_grad(x)) t->grad(x).noalias() += g * t->value(weight);
    if (t->needs_grad(weight)) t->grad(weight).noalias() += g.transpose() * t->value(x);
    if (t->needs_grad(bias)) t->grad(bias) += g.colwise().sum();
  });
}

Var linear(Var x, Var weight) { return matmul_nt(x, weight); }

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  Tape* t = a.tape;
  Matrix out = a.value() + b.value();
  return t->record(std::move(out), {a, b}, [t, a, b](const Matrix& g) {
    if (t->needs_grad(a)) t->grad(a) += g;
    if (t->needs_grad(b)) t->grad(b) += g;
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shape mismatch");
  Tape* t = a.tape;
  Matrix out = a.value() - b.value();
  return t->record(std::move(out), {a, b}, [t, a, b](const Matrix& g) {
    if (t->needs_grad(a)) t->grad(a) += g;
    if (t->needs_grad(b)) t->grad(b) -= g;
  });
}

Var mul(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul shape mismatch");
  Tape* t = a.tape;
  Matrix out = a.value().cwiseProduct(b.value());
  return t->record(std::move(out), {a, b}, [t, a, b](const Matrix& g) {
    if (t->needs_grad(a)) t->grad(a) += g.cwiseProduct(t->value(b));
    if (t->needs_grad(b)) t->grad(b) += g.cwiseProduct(t->value(a));
  });
}

Var scale(Var a, double s) {
  Tape* t = a.tape;
  Matrix out = a.value() * s;
  return t->record(std::move(out), {a}, [t, a, s](const Matrix& g) { t->grad(a) += g * s; });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row shape mismatch");
  Tape* t = a.tape;
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return t->record(std::move(out), {a, row}, [t, a, row](const Matrix& g) {
    if (t->needs_grad(a)) t->grad(a) += g;
    if (t->needs_grad(row)) t->grad(row) += g.colwise().sum();
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double gelu_derivative(double x) {
  const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Var gelu(Var a) {
  Tape* t = a.tape;
  Matrix out = a.value().unaryExpr([](double x) { return gelu_value(x); });
  return t->record(std::move(out), {a}, [t, a](const Matrix& g) {
    t->grad(a) += g.cwiseProduct(t->value(a).unaryExpr([](double x) { return gelu_derivative(x); }));
  });
}

Var silu(Var a) {
  Tape* t = a.tape;
  Matrix out = a.value().unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); });
  return t->record(std::move(out), {a}, [t, a](const Matrix& g) {
    const Matrix d = t->value(a).unaryExpr([](double x) {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 + x * (1.0 - s));
    });
    t->grad(a) += g.cwiseProduct(d);
  });
}

// ---------------------------------------------------------------------------
// Normalization and modulation
// ---------------------------------------------------------------------------

Var layer_norm(Var x, double eps) {
  Tape* t = x.tape;
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows();
  const Eigen::Index d = xv.cols();
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  Matrix out(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(r) = is;
    out.row(r) = (xv.row(r).array() - mean) * is;
  }
  auto normed = std::make_shared<Matrix>(out);
  return t->record(std::move(out), {x}, [t, x, normed, inv_std](const Matrix& g) {
    const Matrix& yv = *normed;
    Matrix& gx = t->grad(x);
    const double inv_d = 1.0 / static_cast<double>(yv.cols());
    for (Eigen::Index r = 0; r < yv.rows(); ++r) {
      const double mean_g = g.row(r).sum() * inv_d;
      const double mean_gy = g.row(r).dot(yv.row(r)) * inv_d;
      gx.row(r).array() += (*inv_std)(r) * (g.row(r).array() - mean_g - yv.row(r).array() * mean_gy);
    }
  });
}

Var modulate(Var x, Var shift, Var scale_row) {
  require(shift.rows() == 1 && shift.cols() == x.cols(), "modulate shift shape");
  require(scale_row.rows() == 1 && scale_row.cols() == x.cols(), "modulate scale shape");
  Tape* t = x.tape;
  const RowVec factor = scale_row.value().row(0).array() + 1.0;
  Matrix out = x.value().array().rowwise() * factor.array();
  out.rowwise() += shift.value().row(0);
  return t->record(std::move(out), {x, shift, scale_row}, [t, x, shift, scale_row](const Matrix& g) {
    if (t->needs_grad(x)) {
      const RowVec f = t->value(scale_row).row(0).array() + 1.0;
      t->grad(x).array() += g.array().rowwise() * f.array();
    }
    if (t->needs_grad(shift)) t->grad(shift) += g.colwise().sum();
    if (t->needs_grad(scale_row)) t->grad(scale_row) += g.cwiseProduct(t->value(x)).colwise().sum();
  });
}

Var gated_residual(Var h, Var gate, Var y) {
  require(gate.rows() == 1 && gate.cols() == h.cols(), "gate shape");
  require(y.rows() == h.rows() && y.cols() == h.cols(), "residual shape");
  Tape* t = h.tape;
  Matrix out = h.value();
  out.array() += y.value().array().rowwise() * gate.value().row(0).array();
  return t->record(std::move(out), {h, gate, y}, [t, h, gate, y](const Matrix& g) {
    if (t->needs_grad(h)) t->grad(h) += g;
    if (t->needs_grad(y)) t->grad(y).array() += g.array().rowwise() * t->value(gate).row(0).array();
    if (t->needs_grad(gate)) t->grad(gate) += g.cwiseProduct(t->value(y)).colwise().sum();
  });
}

// ---------------------------------------------------------------------------
// Indexing
// ---------------------------------------------------------------------------

Var slice_cols(Var a, int begin, int count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.cols(), "slice_cols range");
  Tape* t = a.tape;
  Matrix out = a.value().middleCols(begin, count);
  return t->record(std::move(out), {a}, [t, a, begin, count](const Matrix& g) {
    t->grad(a).middleCols(begin, count) += g;
  });
}

Var slice_rows(Var a, int begin, int count) {
  require(begin >= 0 && count >= 0 && begin + count <= a.rows(), "slice_rows range");
  Tape* t = a.tape;
  Matrix out = a.value().middleRows(begin, count);
  return t->record(std::move(out), {a}, [t, a, begin, count](const Matrix& g) {
    t->grad(a).middleRows(begin, count) += g;
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows needs inputs");
  Tape* t = parts.front().tape;
  const Eigen::Index d = parts.front().cols();
  Eigen::Index n = 0;
  for (const Var& p : parts) {
    require(p.cols() == d, "concat_rows width mismatch");
    n += p.rows();
  }
  Matrix out(n, d);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t->record(std::move(out), parts, [t, parts](const Matrix& g) {
    Eigen::Index row = 0;
    for (const Var& p : parts) {
      const Eigen::Index rows = t->value(p).rows();
      if (t->needs_grad(p)) t->grad(p) += g.middleRows(row, rows);
      row += rows;
    }
  });
}

Var gather_rows(Var table, std::vector<int> index) {
  Tape* t = table.tape;
  const Matrix& tv = table.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), tv.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] >= 0 && index[r] < tv.rows(), "gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(r)) = tv.row(index[r]);
  }
  return t->record(std::move(out), {table}, [t, table, index = std::move(index)](const Matrix& g) {
    Matrix& gt = t->grad(table);
    for (std::size_t r = 0; r < index.size(); ++r) gt.row(index[r]) += g.row(static_cast<Eigen::Index>(r));
  });
}

Var add_gathered(Var x, Var table, std::vector<int> index) {
  require(static_cast<Eigen::Index>(index.size()) == x.rows(), "add_gathered index length");
  require(table.cols() == x.cols(), "add_gathered width mismatch");
  Tape* t = x.tape;
  Matrix out = x.value();
  const Matrix& tv = table.value();
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0) continue;
    require(index[r] < tv.rows(), "add_gathered index out of range");
    out.row(static_cast<Eigen::Index>(r)) += tv.row(index[r]);
  }
  return t->record(std::move(out), {x, table}, [t, x, table, index = std::move(index)](const Matrix& g) {
    if (t->needs_grad(x)) t->grad(x) += g;
    if (t->needs_grad(table)) {
      Matrix& gt = t->grad(table);
      for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= 0) gt.row(index[r]) += g.row(static_cast<Eigen::Index>(r));
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

Var attention(Var q, Var k, Var v, int n_heads, std::vector<Matrix>* weights_out) {
  const Eigen::Index d = q.cols();
  require(k.cols() == d && v.cols() == d, "attention width mismatch");
  require(k.rows() == v.rows(), "attention key/value length mismatch");
  require(n_heads > 0 && d % n_heads == 0, "attention head split");
  Tape* t = q.tape;
  const int dh = static_cast<int>(d / n_heads);
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();

  auto probs = std::make_shared<std::vector<Matrix>>(n_heads);
  Matrix out(qv.rows(), d);
  for (int h = 0; h < n_heads; ++h) {
    Matrix s = (qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose()) * sc;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const double mx = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - mx).exp();
      s.row(r) /= s.row(r).sum();
    }
    out.middleCols(h * dh, dh).noalias() = s * vv.middleCols(h * dh, dh);
    (*probs)[h] = std::move(s);
  }
  if (weights_out) *weights_out = *probs;

  return t->record(std::move(out), {q, k, v}, [t, q, k, v, probs, dh, sc](const Matrix& g) {
    const Matrix& qv2 = t->value(q);
    const Matrix& kv2 = t->value(k);
    const Matrix& vv2 = t->value(v);
    const bool gq = t->needs_grad(q);
    const bool gk = t->needs_grad(k);
    const bool gv = t->needs_grad(v);
    for (std::size_t h = 0; h < probs->size(); ++h) {
      const Matrix& p = (*probs)[h];
      const auto cols = Eigen::seqN(static_cast<Eigen::Index>(h) * dh, dh);
      const Matrix go = g(Eigen::all, cols);
      if (gv) t->grad(v)(Eigen::all, cols).noalias() += p.transpose() * go;
      if (!gq && !gk) continue;
      Matrix dp = go * vv2(Eigen::all, cols).transpose();
      for (Eigen::Index r = 0; r < dp.rows(); ++r) {
        const double dot = dp.row(r).dot(p.row(r));
        dp.row(r) = p.row(r).cwiseProduct((dp.row(r).array() - dot).matrix());
      }
      if (gq) t->grad(q)(Eigen::all, cols).noalias() += (dp * kv2(Eigen::all, cols)) * sc;
      if (gk) t->grad(k)(Eigen::all, cols).noalias() += (dp.transpose() * qv2(Eigen::all, cols)) * sc;
    }
  });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Var mse(Var pred, const Matrix& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), "mse shape mismatch");
  Tape* t = pred.tape;
  auto diff = std::make_shared<Matrix>(pred.value() - target);
  const double n = static_cast<double>(diff->size());
  Matrix out(1, 1);
  out(0, 0) = diff->squaredNorm() / n;
  return t->record(std::move(out), {pred}, [t, pred, diff, n](const Matrix& g) {
    t->grad(pred) += (*diff) * (2.0 * g(0, 0) / n);
  });
}

Var sum_all(Var a) {
  Tape* t = a.tape;
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t->record(std::move(out), {a}, [t, a](const Matrix& g) { t->grad(a).array() += g(0, 0); });
}

}  // namespace flowcast::ad
