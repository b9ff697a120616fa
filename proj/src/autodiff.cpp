#include "infocon/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace infocon::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Matrix Var::grad() const {
  if (tape_->has_grad(id_)) return tape_->grad_ref(id_);
  return Matrix::Zero(rows(), cols());
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Matrix value, bool requires_grad) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) { return push(std::move(value), false); }

Var Tape::input(Matrix value) { return push(std::move(value), grad_enabled_); }

Var Tape::param(Param& p) {
  Var v = push(p.value, grad_enabled_);
  nodes_[v.id()]->param = &p;
  return v;
}

void Tape::set_backward(const Var& out, std::function<void()> fn) {
  nodes_[out.id()]->backward = std::move(fn);
}

Matrix& Tape::accum(int id) {
  Node& n = *nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: variable from another tape");
  if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  if (!grad_enabled_) throw std::logic_error("backward on a tape without gradient recording");
  accum(loss.id())(0, 0) += 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = *nodes_[id];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward();
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

int SeqLayout::total_rows() const {
  int n = 0;
  for (int l : lengths) n += l;
  return n;
}

SeqLayout SeqLayout::single(int length) { return SeqLayout{{0}, {length}}; }

namespace {

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw std::invalid_argument("autodiff: uninitialised variable");
    if (t == nullptr) t = v.tape();
    if (v.tape() != t) throw std::invalid_argument("autodiff: variables from different tapes");
  }
  return *t;
}

bool any_requires(Tape& t, std::initializer_list<Var> vars) {
  if (!t.grad_enabled()) return false;
  return std::any_of(vars.begin(), vars.end(), [](const Var& v) { return v.requires_grad(); });
}

template <class Backward>
Var make(Tape& t, Matrix value, std::initializer_list<Var> inputs, Backward&& bw) {
  const bool rg = any_requires(t, inputs);
  Var out = t.push(std::move(value), rg);
  if (rg) t.set_backward(out, [bw = std::forward<Backward>(bw), o = out.id(), tp = &t]() { bw(*tp, tp->grad_ref(o)); });
  return out;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tape& t = same_tape({a, b});
  return make(t, a.value() + b.value(), {a, b}, [a = a.id(), b = b.id()](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accum(a) += g;
    if (t.requires_grad(b)) t.accum(b) += g;
  });
}

Var operator-(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tape& t = same_tape({a, b});
  return make(t, a.value() - b.value(), {a, b}, [a = a.id(), b = b.id()](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accum(a) += g;
    if (t.requires_grad(b)) t.accum(b) -= g;
  });
}

Var operator-(const Var& a) { return scale(a, -1.0); }

Var hadamard(const Var& a, const Var& b) {
  check_same_shape(a, b, "hadamard");
  Tape& t = same_tape({a, b});
  return make(t, a.value().cwiseProduct(b.value()), {a, b}, [a = a.id(), b = b.id()](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accum(a) += g.cwiseProduct(t.value(b));
    if (t.requires_grad(b)) t.accum(b) += g.cwiseProduct(t.value(a));
  });
}

Var scale(const Var& a, double c) {
  Tape& t = same_tape({a});
  return make(t, a.value() * c, {a}, [a = a.id(), c](Tape& t, const Matrix& g) { t.accum(a) += g * c; });
}

Var add_scalar(const Var& a, double c) {
  Tape& t = same_tape({a});
  return make(t, a.value().array() + c, {a}, [a = a.id()](Tape& t, const Matrix& g) { t.accum(a) += g; });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Tape& t = same_tape({a, b});
  return make(t, a.value() * b.value(), {a, b}, [a = a.id(), b = b.id()](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accum(a).noalias() += g * t.value(b).transpose();
    if (t.requires_grad(b)) t.accum(b).noalias() += t.value(a).transpose() * g;
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Tape& t = same_tape({a, b});
  return make(t, a.value() * b.value().transpose(), {a, b}, [a = a.id(), b = b.id()](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accum(a).noalias() += g * t.value(b);
    if (t.requires_grad(b)) t.accum(b).noalias() += g.transpose() * t.value(a);
  });
}

Var transpose(const Var& a) {
  Tape& t = same_tape({a});
  return make(t, a.value().transpose(), {a}, [a = a.id()](Tape& t, const Matrix& g) { t.accum(a) += g.transpose(); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: bad row shape");
  Tape& t = same_tape({a, row});
  Matrix v = a.value().rowwise() + row.value().row(0);
  return make(t, std::move(v), {a, row}, [a = a.id(), r = row.id()](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accum(a) += g;
    if (t.requires_grad(r)) t.accum(r) += g.colwise().sum();
  });
}

Var mul_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("mul_col: bad column shape");
  Tape& t = same_tape({a, col});
  Matrix v = a.value().array().colwise() * col.value().col(0).array();
  return make(t, std::move(v), {a, col}, [a = a.id(), c = col.id()](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accum(a).array() += g.array().colwise() * t.value(c).col(0).array();
    if (t.requires_grad(c)) t.accum(c) += g.cwiseProduct(t.value(a)).rowwise().sum();
  });
}

Var div_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("div_col: bad column shape");
  Tape& t = same_tape({a, col});
  Matrix v = a.value().array().colwise() / col.value().col(0).array();
  return make(t, std::move(v), {a, col}, [a = a.id(), c = col.id()](Tape& t, const Matrix& g) {
    const auto& cv = t.value(c).col(0).array();
    if (t.requires_grad(a)) t.accum(a).array() += g.array().colwise() / cv;
    if (t.requires_grad(c)) {
      Vector s = g.cwiseProduct(t.value(a)).rowwise().sum();
      t.accum(c).col(0).array() -= s.array() / cv.square();
    }
  });
}

Var tanh(const Var& a) {
  Tape& t = same_tape({a});
  Matrix v = a.value().array().tanh();
  Var out = make(t, v, {a}, [a = a.id(), v](Tape& t, const Matrix& g) {
    t.accum(a).array() += g.array() * (1.0 - v.array().square());
  });
  return out;
}

Var sigmoid(const Var& a) {
  Tape& t = same_tape({a});
  Matrix v = (1.0 + (-a.value().array()).exp()).inverse();
  return make(t, v, {a}, [a = a.id(), v](Tape& t, const Matrix& g) {
    t.accum(a).array() += g.array() * v.array() * (1.0 - v.array());
  });
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

Var gelu(const Var& a) {
  Tape& t = same_tape({a});
  const double k = kGeluC;
  const auto x = a.value().array();
  Matrix inner_tanh = (k * (x + 0.044715 * x.cube())).tanh();
  Matrix v = 0.5 * x * (1.0 + inner_tanh.array());
  return make(t, std::move(v), {a}, [a = a.id(), th = std::move(inner_tanh)](Tape& t, const Matrix& g) {
    const auto x = t.value(a).array();
    const auto tt = th.array();
    auto d = 0.5 * (1.0 + tt) + 0.5 * x * (1.0 - tt.square()) * kGeluC * (1.0 + 3.0 * 0.044715 * x.square());
    t.accum(a).array() += g.array() * d;
  });
}

Var log(const Var& a) {
  Tape& t = same_tape({a});
  return make(t, a.value().array().log(), {a}, [a = a.id()](Tape& t, const Matrix& g) {
    t.accum(a).array() += g.array() / t.value(a).array();
  });
}

Var square(const Var& a) {
  Tape& t = same_tape({a});
  return make(t, a.value().array().square(), {a}, [a = a.id()](Tape& t, const Matrix& g) {
    t.accum(a).array() += 2.0 * g.array() * t.value(a).array();
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Tape& t = same_tape({a});
  Matrix v = a.value().cwiseMax(lo).cwiseMin(hi);
  return make(t, std::move(v), {a}, [a = a.id(), lo, hi](Tape& t, const Matrix& g) {
    const auto x = t.value(a).array();
    t.accum(a).array() += (x >= lo && x <= hi).select(g.array(), 0.0);
  });
}

Var sum(const Var& a) {
  Tape& t = same_tape({a});
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return make(t, std::move(v), {a}, [a = a.id()](Tape& t, const Matrix& g) { t.accum(a).array() += g(0, 0); });
}

Var weighted_sum(const Var& a, const Matrix& w) {
  if (w.rows() != a.rows() || w.cols() != a.cols()) throw std::invalid_argument("weighted_sum: shape mismatch");
  Tape& t = same_tape({a});
  Matrix v(1, 1);
  v(0, 0) = a.value().cwiseProduct(w).sum();
  return make(t, std::move(v), {a}, [a = a.id(), w](Tape& t, const Matrix& g) { t.accum(a) += g(0, 0) * w; });
}

Var row_sum(const Var& a) {
  Tape& t = same_tape({a});
  return make(t, a.value().rowwise().sum(), {a}, [a = a.id()](Tape& t, const Matrix& g) {
    t.accum(a).colwise() += g.col(0);
  });
}

Var row_dot(const Var& a, const Var& b) {
  check_same_shape(a, b, "row_dot");
  Tape& t = same_tape({a, b});
  Matrix v = a.value().cwiseProduct(b.value()).rowwise().sum();
  return make(t, std::move(v), {a, b}, [a = a.id(), b = b.id()](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accum(a).array() += t.value(b).array().colwise() * g.col(0).array();
    if (t.requires_grad(b)) t.accum(b).array() += t.value(a).array().colwise() * g.col(0).array();
  });
}

Var row_norm(const Var& a, double eps) {
  Tape& t = same_tape({a});
  Matrix v = (a.value().rowwise().squaredNorm().array() + eps).sqrt().matrix();
  return make(t, v, {a}, [a = a.id(), v](Tape& t, const Matrix& g) {
    Vector coef(v.rows());
    for (Index i = 0; i < v.rows(); ++i) coef(i) = v(i, 0) > 0.0 ? g(i, 0) / v(i, 0) : 0.0;
    t.accum(a).array() += t.value(a).array().colwise() * coef.array();
  });
}

Var row_normalize(const Var& a) { return div_col(a, row_norm(a)); }

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = *parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("concat_cols: variables from different tapes");
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.cols();
    rg = rg || p.requires_grad();
  }
  Matrix v(rows, cols);
  std::vector<std::pair<int, Index>> spans;
  Index c = 0;
  for (const Var& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    spans.emplace_back(p.id(), c);
    c += p.cols();
  }
  rg = rg && t.grad_enabled();
  Var out = t.push(std::move(v), rg);
  if (rg) {
    t.set_backward(out, [spans, o = out.id(), tp = &t]() {
      const Matrix& g = tp->grad_ref(o);
      for (auto [id, start] : spans) {
        if (!tp->requires_grad(id)) continue;
        tp->accum(id) += g.middleCols(start, tp->value(id).cols());
      }
    });
  }
  return out;
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols: range");
  Tape& t = same_tape({a});
  return make(t, a.value().middleCols(start, count), {a}, [a = a.id(), start, count](Tape& t, const Matrix& g) {
    t.accum(a).middleCols(start, count) += g;
  });
}

Var gather_rows(const Var& a, const std::vector<int>& idx) {
  Tape& t = same_tape({a});
  Matrix v(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0) {
      v.row(i).setZero();
    } else {
      if (idx[i] >= a.rows()) throw std::out_of_range("gather_rows: index");
      v.row(i) = a.value().row(idx[i]);
    }
  }
  return make(t, std::move(v), {a}, [a = a.id(), idx](Tape& t, const Matrix& g) {
    Matrix& acc = t.accum(a);
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i] >= 0) acc.row(idx[i]) += g.row(i);
  });
}

Var reshape_row(const Var& a, Index rows, Index cols) {
  if (a.rows() != 1 || a.cols() != rows * cols) throw std::invalid_argument("reshape_row: size mismatch");
  Tape& t = same_tape({a});
  Matrix v(rows, cols);
  for (Index r = 0; r < rows; ++r) v.row(r) = a.value().block(0, r * cols, 1, cols);
  return make(t, std::move(v), {a}, [a = a.id(), rows, cols](Tape& t, const Matrix& g) {
    Matrix& acc = t.accum(a);
    for (Index r = 0; r < rows; ++r) acc.block(0, r * cols, 1, cols) += g.row(r);
  });
}

Var softmax_rows(const Var& a) {
  Tape& t = same_tape({a});
  Matrix v = a.value();
  for (Index i = 0; i < v.rows(); ++i) {
    const double m = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - m).exp();
    v.row(i) /= v.row(i).sum();
  }
  return make(t, v, {a}, [a = a.id(), v](Tape& t, const Matrix& g) {
    Vector dots = g.cwiseProduct(v).rowwise().sum();
    t.accum(a).array() += v.array() * (g.array().colwise() - dots.array());
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Index d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
    throw std::invalid_argument("layer_norm: parameter shape");
  Tape& t = same_tape({x, gain, bias});
  const Matrix& xv = x.value();
  Vector mean = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mean;
  Vector inv_std = ((centered.rowwise().squaredNorm() / static_cast<double>(d)).array() + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix v = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return make(t, std::move(v), {x, gain, bias},
              [x = x.id(), gn = gain.id(), b = bias.id(), xhat, inv_std, d](Tape& t, const Matrix& g) {
                if (t.requires_grad(gn)) t.accum(gn) += g.cwiseProduct(xhat).colwise().sum();
                if (t.requires_grad(b)) t.accum(b) += g.colwise().sum();
                if (!t.requires_grad(x)) return;
                Matrix dxhat = g.array().rowwise() * t.value(gn).row(0).array();
                Vector m1 = dxhat.rowwise().mean();
                Vector m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
                Matrix dx = (dxhat.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix();
                t.accum(x).array() += dx.array().colwise() * inv_std.array();
              });
}

Var causal_attention(const Var& qkv, const SeqLayout& layout, int num_heads) {
  const Index n = qkv.rows();
  if (qkv.cols() % 3 != 0) throw std::invalid_argument("causal_attention: columns must be 3*D");
  const Index d = qkv.cols() / 3;
  if (num_heads <= 0 || d % num_heads != 0) throw std::invalid_argument("causal_attention: heads must divide D");
  if (layout.total_rows() != n) throw std::invalid_argument("causal_attention: layout does not cover rows");
  const Index dh = d / num_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tape& t = same_tape({qkv});
  const Matrix& x = qkv.value();
  Matrix out = Matrix::Zero(n, d);
  const bool rg = any_requires(t, {qkv});
  auto probs = std::make_shared<std::vector<Matrix>>();
  for (std::size_t s = 0; s < layout.offsets.size(); ++s) {
    const Index off = layout.offsets[s];
    const Index len = layout.lengths[s];
    for (int h = 0; h < num_heads; ++h) {
      auto q = x.block(off, h * dh, len, dh);
      auto k = x.block(off, d + h * dh, len, dh);
      auto v = x.block(off, 2 * d + h * dh, len, dh);
      Matrix sc = (q * k.transpose()) * inv_sqrt;
      for (Index i = 0; i < len; ++i) {
        const double m = sc.row(i).head(i + 1).maxCoeff();
        double z = 0.0;
        for (Index j = 0; j <= i; ++j) {
          sc(i, j) = std::exp(sc(i, j) - m);
          z += sc(i, j);
        }
        for (Index j = 0; j <= i; ++j) sc(i, j) /= z;
        for (Index j = i + 1; j < len; ++j) sc(i, j) = 0.0;
      }
      out.block(off, h * dh, len, dh).noalias() = sc * v;
      if (rg) probs->push_back(std::move(sc));
    }
  }
  return make(t, std::move(out), {qkv}, [a = qkv.id(), layout, num_heads, d, dh, inv_sqrt, probs](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    Matrix& acc = t.accum(a);
    std::size_t pi = 0;
    for (std::size_t s = 0; s < layout.offsets.size(); ++s) {
      const Index off = layout.offsets[s];
      const Index len = layout.lengths[s];
      for (int h = 0; h < num_heads; ++h) {
        const Matrix& p = (*probs)[pi++];
        auto q = x.block(off, h * dh, len, dh);
        auto k = x.block(off, d + h * dh, len, dh);
        auto v = x.block(off, 2 * d + h * dh, len, dh);
        auto go = g.block(off, h * dh, len, dh);
        acc.block(off, 2 * d + h * dh, len, dh).noalias() += p.transpose() * go;
        Matrix dp = go * v.transpose();
        Vector dots = dp.cwiseProduct(p).rowwise().sum();
        Matrix ds = (p.array() * (dp.array().colwise() - dots.array())).matrix() * inv_sqrt;
        acc.block(off, h * dh, len, dh).noalias() += ds * k;
        acc.block(off, d + h * dh, len, dh).noalias() += ds.transpose() * q;
      }
    }
  });
}

Var straight_through(const Var& probs, const Matrix& table, const std::vector<int>& hard, const Matrix* frozen_offset) {
  const Index n = probs.rows();
  if (probs.cols() != table.rows()) throw std::invalid_argument("straight_through: probs/table mismatch");
  if (static_cast<Index>(hard.size()) != n) throw std::invalid_argument("straight_through: assignment count");
  Tape& t = same_tape({probs});
  Matrix v;
  if (frozen_offset != nullptr) {
    v = probs.value() * table + *frozen_offset;
  } else {
    v.resize(n, table.cols());
    for (Index i = 0; i < n; ++i) v.row(i) = table.row(hard[i]);
  }
  return make(t, std::move(v), {probs}, [p = probs.id(), table](Tape& t, const Matrix& g) {
    t.accum(p).noalias() += g * table.transpose();
  });
}

Var batched_matvec(const Var& w_flat, const Var& x, Index out, Index in, bool transposed) {
  const Index n = w_flat.rows();
  if (x.rows() != n || w_flat.cols() != out * in) throw std::invalid_argument("batched_matvec: shape mismatch");
  if (x.cols() != (transposed ? out : in)) throw std::invalid_argument("batched_matvec: vector length");
  Tape& t = same_tape({w_flat, x});
  const Matrix& w = w_flat.value();
  const Matrix& xv = x.value();
  Matrix y = Matrix::Zero(n, transposed ? in : out);
  for (Index r = 0; r < n; ++r) {
    for (Index o = 0; o < out; ++o) {
      for (Index i = 0; i < in; ++i) {
        const double wv = w(r, o * in + i);
        if (transposed)
          y(r, i) += wv * xv(r, o);
        else
          y(r, o) += wv * xv(r, i);
      }
    }
  }
  return make(t, std::move(y), {w_flat, x}, [wi = w_flat.id(), xi = x.id(), out, in, transposed](Tape& t, const Matrix& g) {
    const Matrix& w = t.value(wi);
    const Matrix& xv = t.value(xi);
    const Index n = w.rows();
    const bool gw = t.requires_grad(wi);
    const bool gx = t.requires_grad(xi);
    Matrix* aw = gw ? &t.accum(wi) : nullptr;
    Matrix* ax = gx ? &t.accum(xi) : nullptr;
    for (Index r = 0; r < n; ++r) {
      for (Index o = 0; o < out; ++o) {
        for (Index i = 0; i < in; ++i) {
          if (transposed) {
            // y_i = sum_o W_oi x_o
            if (gw) (*aw)(r, o * in + i) += g(r, i) * xv(r, o);
            if (gx) (*ax)(r, o) += w(r, o * in + i) * g(r, i);
          } else {
            if (gw) (*aw)(r, o * in + i) += g(r, o) * xv(r, i);
            if (gx) (*ax)(r, i) += w(r, o * in + i) * g(r, o);
          }
        }
      }
    }
  });
}

}  // namespace infocon::ad
