#include "cimage/tape.hpp"
#include <memory>

#include <algorithm>
#include <cmath>

#include "cimage/errors.hpp"

namespace cimage::nn {

namespace {

void check_finite(const DenseMatrix& m, const char* op_name) {
  if (!m.all_finite())
    throw NonFiniteError(std::string("non-finite output of op '") + op_name + "'");
}

void check_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                     "x" + std::to_string(b.cols()));
}

}  // namespace

const DenseMatrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const DenseMatrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("Var::scalar: value is not 1x1");
  return v(0, 0);
}

int Tape::add_node(DenseMatrix value, std::vector<int> parents, BackwardFn backward,
                   const char* op_name) {
  check_finite(value, op_name);
  Node node;
  node.value = std::move(value);
  node.parents = std::move(parents);
  node.backward = std::move(backward);
  for (int p : node.parents)
    if (nodes_[p].requires_grad) node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(DenseMatrix value) {
  check_finite(value, "constant");
  Node node;
  node.value = std::move(value);
  node.requires_grad = false;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::scalar_constant(double v) {
  DenseMatrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Tape::param(ParamSet& params, const std::string& name) {
  Node node;
  node.value = params.at(name).value;
  node.requires_grad = true;
  node.bound_params = &params;
  node.bound_name = name;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(DenseMatrix value) {
  check_finite(value, "input");
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ShapeError("backward: var from another tape");
  const DenseMatrix& lv = nodes_[loss.id].value;
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ShapeError("backward: loss must be a 1x1 scalar");
  for (Node& n : nodes_) {
    n.grad = DenseMatrix::zeros(n.value.rows(), n.value.cols());
  }
  nodes_[loss.id].grad(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    n.backward(*this, i);
  }
  for (Node& n : nodes_) {
    if (n.bound_params && n.requires_grad)
      n.bound_params->at(n.bound_name).grad.add_scaled(n.grad, 1.0);
  }
}

// --- ops ----------------------------------------------------------------

namespace {

Tape& tape_of(Var a) { return *a.tape; }

}  // namespace

Var add(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "add");
  DenseMatrix out = a.value();
  out.add_scaled(b.value(), 1.0);
  int id = tape_of(a).add_node(
      std::move(out), {a.id, b.id},
      [pa = a.id, pb = b.id](Tape& t, int self) {
        if (t.requires_grad(pa)) t.grad(pa).add_scaled(t.grad(self), 1.0);
        if (t.requires_grad(pb)) t.grad(pb).add_scaled(t.grad(self), 1.0);
      },
      "add");
  return Var{a.tape, id};
}

Var sub(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "sub");
  DenseMatrix out = a.value();
  out.add_scaled(b.value(), -1.0);
  int id = tape_of(a).add_node(
      std::move(out), {a.id, b.id},
      [pa = a.id, pb = b.id](Tape& t, int self) {
        if (t.requires_grad(pa)) t.grad(pa).add_scaled(t.grad(self), 1.0);
        if (t.requires_grad(pb)) t.grad(pb).add_scaled(t.grad(self), -1.0);
      },
      "sub");
  return Var{a.tape, id};
}

Var mul(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "mul");
  DenseMatrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= b.value().values()[i];
  int id = tape_of(a).add_node(
      std::move(out), {a.id, b.id},
      [pa = a.id, pb = b.id](Tape& t, int self) {
        const auto& g = t.grad(self).values();
        if (t.requires_grad(pa)) {
          auto& ga = t.grad(pa).values();
          const auto& bv = t.value(pb).values();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(pb)) {
          auto& gb = t.grad(pb).values();
          const auto& av = t.value(pa).values();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
      },
      "mul");
  return Var{a.tape, id};
}

Var scale(Var a, double c) {
  DenseMatrix out = a.value();
  for (double& v : out.values()) v *= c;
  int id = tape_of(a).add_node(
      std::move(out), {a.id},
      [pa = a.id, c](Tape& t, int self) {
        if (t.requires_grad(pa)) t.grad(pa).add_scaled(t.grad(self), c);
      },
      "scale");
  return Var{a.tape, id};
}

Var add_scalar(Var a, double c) {
  DenseMatrix out = a.value();
  for (double& v : out.values()) v += c;
  int id = tape_of(a).add_node(
      std::move(out), {a.id},
      [pa = a.id](Tape& t, int self) {
        if (t.requires_grad(pa)) t.grad(pa).add_scaled(t.grad(self), 1.0);
      },
      "add_scalar");
  return Var{a.tape, id};
}

Var matmul(Var a, Var b) {
  DenseMatrix out = cimage::matmul(a.value(), b.value());
  int id = tape_of(a).add_node(
      std::move(out), {a.id, b.id},
      [pa = a.id, pb = b.id](Tape& t, int self) {
        const DenseMatrix& g = t.grad(self);
        if (t.requires_grad(pa))
          t.grad(pa).add_scaled(matmul_nt(g, t.value(pb)), 1.0);
        if (t.requires_grad(pb))
          t.grad(pb).add_scaled(matmul_tn(t.value(pa), g), 1.0);
      },
      "matmul");
  return Var{a.tape, id};
}

Var linear(Var x, Var w, Var b) {
  if (x.cols() != w.rows()) throw ShapeError("linear: input width != weight rows");
  if (b.rows() != 1 || b.cols() != w.cols())
    throw ShapeError("linear: bias must be 1 x out_width");
  DenseMatrix out = cimage::matmul(x.value(), w.value());
  const DenseMatrix& bias = b.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double* row = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) row[j] += bias(0, j);
  }
  int id = tape_of(x).add_node(
      std::move(out), {x.id, w.id, b.id},
      [px = x.id, pw = w.id, pb = b.id](Tape& t, int self) {
        const DenseMatrix& g = t.grad(self);
        if (t.requires_grad(px))
          t.grad(px).add_scaled(matmul_nt(g, t.value(pw)), 1.0);
        if (t.requires_grad(pw))
          t.grad(pw).add_scaled(matmul_tn(t.value(px), g), 1.0);
        if (t.requires_grad(pb)) {
          DenseMatrix& gb = t.grad(pb);
          for (std::size_t i = 0; i < g.rows(); ++i) {
            const double* row = g.row(i);
            for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += row[j];
          }
        }
      },
      "linear");
  return Var{x.tape, id};
}

Var relu(Var a) {
  DenseMatrix out = a.value();
  Tape& t = tape_of(a);
  for (double& v : out.values()) {
    t.fold_regime_bit(v > 0.0);
    if (v < 0.0) v = 0.0;
  }
  int id = t.add_node(
      std::move(out), {a.id},
      [pa = a.id](Tape& tt, int self) {
        if (!tt.requires_grad(pa)) return;
        auto& ga = tt.grad(pa).values();
        const auto& g = tt.grad(self).values();
        const auto& x = tt.value(pa).values();
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x[i] > 0.0) ga[i] += g[i];
      },
      "relu");
  return Var{a.tape, id};
}

Var sigmoid(Var a) {
  DenseMatrix out = a.value();
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  int id = tape_of(a).add_node(
      std::move(out), {a.id},
      [pa = a.id](Tape& t, int self) {
        if (!t.requires_grad(pa)) return;
        auto& ga = t.grad(pa).values();
        const auto& g = t.grad(self).values();
        const auto& s = t.value(self).values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s[i] * (1.0 - s[i]);
      },
      "sigmoid");
  return Var{a.tape, id};
}

Var exp(Var a) {
  DenseMatrix out = a.value();
  for (double& v : out.values()) v = std::exp(v);
  int id = tape_of(a).add_node(
      std::move(out), {a.id},
      [pa = a.id](Tape& t, int self) {
        if (!t.requires_grad(pa)) return;
        auto& ga = t.grad(pa).values();
        const auto& g = t.grad(self).values();
        const auto& e = t.value(self).values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * e[i];
      },
      "exp");
  return Var{a.tape, id};
}

Var log(Var a) {
  DenseMatrix out = a.value();
  for (double& v : out.values()) v = std::log(v);
  int id = tape_of(a).add_node(
      std::move(out), {a.id},
      [pa = a.id](Tape& t, int self) {
        if (!t.requires_grad(pa)) return;
        auto& ga = t.grad(pa).values();
        const auto& g = t.grad(self).values();
        const auto& x = t.value(pa).values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
      },
      "log");
  return Var{a.tape, id};
}

Var pow_const(Var a, double p) {
  DenseMatrix out = a.value();
  for (double& v : out.values()) v = std::pow(v, p);
  int id = tape_of(a).add_node(
      std::move(out), {a.id},
      [pa = a.id, p](Tape& t, int self) {
        if (!t.requires_grad(pa)) return;
        auto& ga = t.grad(pa).values();
        const auto& g = t.grad(self).values();
        const auto& x = t.value(pa).values();
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * p * std::pow(x[i], p - 1.0);
      },
      "pow_const");
  return Var{a.tape, id};
}

Var clamp(Var a, double lo, double hi) {
  DenseMatrix out = a.value();
  Tape& t = tape_of(a);
  for (double& v : out.values()) {
    t.fold_regime_bit(v > lo);
    t.fold_regime_bit(v < hi);
    v = std::min(hi, std::max(lo, v));
  }
  int id = t.add_node(
      std::move(out), {a.id},
      [pa = a.id, lo, hi](Tape& tt, int self) {
        if (!tt.requires_grad(pa)) return;
        auto& ga = tt.grad(pa).values();
        const auto& g = tt.grad(self).values();
        const auto& x = tt.value(pa).values();
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x[i] > lo && x[i] < hi) ga[i] += g[i];
      },
      "clamp");
  return Var{a.tape, id};
}

Var softmax_rows(Var a) {
  DenseMatrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* row = out.row(r);
    double mx = row[0];
    for (std::size_t j = 1; j < out.cols(); ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < out.cols(); ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < out.cols(); ++j) row[j] /= sum;
  }
  int id = tape_of(a).add_node(
      std::move(out), {a.id},
      [pa = a.id](Tape& t, int self) {
        if (!t.requires_grad(pa)) return;
        const DenseMatrix& g = t.grad(self);
        const DenseMatrix& s = t.value(self);
        DenseMatrix& ga = t.grad(pa);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < g.cols(); ++j) dot += g(r, j) * s(r, j);
          for (std::size_t j = 0; j < g.cols(); ++j)
            ga(r, j) += s(r, j) * (g(r, j) - dot);
        }
      },
      "softmax_rows");
  return Var{a.tape, id};
}

Var l2_normalize_rows(Var a, double eps) {
  DenseMatrix out = a.value();
  Tape& t = tape_of(a);
  std::vector<double> norms(out.rows());
  std::vector<char> active(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* row = out.row(r);
    double sq = 0.0;
    for (std::size_t j = 0; j < out.cols(); ++j) sq += row[j] * row[j];
    const double norm = std::sqrt(sq);
    norms[r] = norm;
    active[r] = norm >= eps;
    t.fold_regime_bit(active[r]);
    if (active[r]) {
      for (std::size_t j = 0; j < out.cols(); ++j) row[j] /= norm;
    } else {
      for (std::size_t j = 0; j < out.cols(); ++j) row[j] = 0.0;
    }
  }
  int id = t.add_node(
      std::move(out), {a.id},
      [pa = a.id, norms, active](Tape& tt, int self) {
        if (!tt.requires_grad(pa)) return;
        const DenseMatrix& g = tt.grad(self);
        const DenseMatrix& y = tt.value(self);
        DenseMatrix& ga = tt.grad(pa);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          if (!active[r]) continue;
          double dot = 0.0;
          for (std::size_t j = 0; j < g.cols(); ++j) dot += g(r, j) * y(r, j);
          for (std::size_t j = 0; j < g.cols(); ++j)
            ga(r, j) += (g(r, j) - dot * y(r, j)) / norms[r];
        }
      },
      "l2_normalize_rows");
  return Var{a.tape, id};
}

Var safe_div(Var a, Var b, double eps) {
  check_same_shape(a.value(), b.value(), "safe_div");
  DenseMatrix out = a.value();
  Tape& t = tape_of(a);
  const auto& bv = b.value().values();
  std::vector<char> active(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    active[i] = std::abs(bv[i]) >= eps;
    t.fold_regime_bit(active[i]);
    out.values()[i] = active[i] ? out.values()[i] / bv[i] : 0.0;
  }
  int id = t.add_node(
      std::move(out), {a.id, b.id},
      [pa = a.id, pb = b.id, active](Tape& tt, int self) {
        const auto& g = tt.grad(self).values();
        const auto& bv2 = tt.value(pb).values();
        const auto& q = tt.value(self).values();  // q = a/b where active
        if (tt.requires_grad(pa)) {
          auto& ga = tt.grad(pa).values();
          for (std::size_t i = 0; i < g.size(); ++i)
            if (active[i]) ga[i] += g[i] / bv2[i];
        }
        if (tt.requires_grad(pb)) {
          auto& gb = tt.grad(pb).values();
          for (std::size_t i = 0; i < g.size(); ++i)
            if (active[i]) gb[i] -= g[i] * q[i] / bv2[i];
        }
      },
      "safe_div");
  return Var{a.tape, id};
}

Var slice_cols(Var a, std::size_t c0, std::size_t width) {
  const DenseMatrix& v = a.value();
  if (c0 + width > v.cols()) throw ShapeError("slice_cols: range out of bounds");
  DenseMatrix out(v.rows(), width);
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t j = 0; j < width; ++j) out(r, j) = v(r, c0 + j);
  int id = tape_of(a).add_node(
      std::move(out), {a.id},
      [pa = a.id, c0, width](Tape& t, int self) {
        if (!t.requires_grad(pa)) return;
        const DenseMatrix& g = t.grad(self);
        DenseMatrix& ga = t.grad(pa);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t j = 0; j < width; ++j) ga(r, c0 + j) += g(r, j);
      },
      "slice_cols");
  return Var{a.tape, id};
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  std::size_t total = 0;
  const std::size_t rows = parts[0].rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    total += p.cols();
  }
  DenseMatrix out(rows, total);
  std::vector<int> parent_ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const DenseMatrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < v.cols(); ++j) out(r, off + j) = v(r, j);
    parent_ids.push_back(p.id);
    offsets.push_back(off);
    off += v.cols();
  }
  int id = parts[0].tape->add_node(
      std::move(out), parent_ids,
      [parent_ids, offsets](Tape& t, int self) {
        const DenseMatrix& g = t.grad(self);
        for (std::size_t k = 0; k < parent_ids.size(); ++k) {
          int pid = parent_ids[k];
          if (!t.requires_grad(pid)) continue;
          DenseMatrix& gp = t.grad(pid);
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t j = 0; j < gp.cols(); ++j)
              gp(r, j) += g(r, offsets[k] + j);
        }
      },
      "concat_cols");
  return Var{parts[0].tape, id};
}

Var slice_rows(Var a, std::size_t r0, std::size_t height) {
  const DenseMatrix& v = a.value();
  if (r0 + height > v.rows()) throw ShapeError("slice_rows: range out of bounds");
  DenseMatrix out(height, v.cols());
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t j = 0; j < v.cols(); ++j) out(r, j) = v(r0 + r, j);
  int id = tape_of(a).add_node(
      std::move(out), {a.id},
      [pa = a.id, r0, height](Tape& t, int self) {
        if (!t.requires_grad(pa)) return;
        const DenseMatrix& g = t.grad(self);
        DenseMatrix& ga = t.grad(pa);
        for (std::size_t r = 0; r < height; ++r)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(r0 + r, j) += g(r, j);
      },
      "slice_rows");
  return Var{a.tape, id};
}

Var gather_rows(Var a, std::vector<std::uint32_t> indices) {
  const DenseMatrix& v = a.value();
  DenseMatrix out(indices.size(), v.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= v.rows()) throw ShapeError("gather_rows: index out of range");
    for (std::size_t j = 0; j < v.cols(); ++j) out(r, j) = v(indices[r], j);
  }
  int id = tape_of(a).add_node(
      std::move(out), {a.id},
      [pa = a.id, idx = std::move(indices)](Tape& t, int self) {
        if (!t.requires_grad(pa)) return;
        const DenseMatrix& g = t.grad(self);
        DenseMatrix& ga = t.grad(pa);
        for (std::size_t r = 0; r < idx.size(); ++r)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(idx[r], j) += g(r, j);
      },
      "gather_rows");
  return Var{a.tape, id};
}

Var mul_col(Var a, Var col) {
  const DenseMatrix& v = a.value();
  const DenseMatrix& c = col.value();
  if (c.cols() != 1 || c.rows() != v.rows())
    throw ShapeError("mul_col: column operand must be n x 1");
  DenseMatrix out = v;
  for (std::size_t r = 0; r < v.rows(); ++r) {
    const double s = c(r, 0);
    double* row = out.row(r);
    for (std::size_t j = 0; j < v.cols(); ++j) row[j] *= s;
  }
  int id = tape_of(a).add_node(
      std::move(out), {a.id, col.id},
      [pa = a.id, pc = col.id](Tape& t, int self) {
        const DenseMatrix& g = t.grad(self);
        const DenseMatrix& av = t.value(pa);
        const DenseMatrix& cv = t.value(pc);
        if (t.requires_grad(pa)) {
          DenseMatrix& ga = t.grad(pa);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            const double s = cv(r, 0);
            for (std::size_t j = 0; j < g.cols(); ++j) ga(r, j) += g(r, j) * s;
          }
        }
        if (t.requires_grad(pc)) {
          DenseMatrix& gc = t.grad(pc);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) s += g(r, j) * av(r, j);
            gc(r, 0) += s;
          }
        }
      },
      "mul_col");
  return Var{a.tape, id};
}

Var safe_div_col(Var a, Var col, double eps) {
  const DenseMatrix& v = a.value();
  const DenseMatrix& c = col.value();
  if (c.cols() != 1 || c.rows() != v.rows())
    throw ShapeError("safe_div_col: column operand must be n x 1");
  Tape& t = tape_of(a);
  DenseMatrix out = v;
  std::vector<char> active(v.rows());
  for (std::size_t r = 0; r < v.rows(); ++r) {
    active[r] = std::abs(c(r, 0)) >= eps;
    t.fold_regime_bit(active[r]);
    double* row = out.row(r);
    if (active[r]) {
      const double inv = 1.0 / c(r, 0);
      for (std::size_t j = 0; j < v.cols(); ++j) row[j] *= inv;
    } else {
      for (std::size_t j = 0; j < v.cols(); ++j) row[j] = 0.0;
    }
  }
  int id = t.add_node(
      std::move(out), {a.id, col.id},
      [pa = a.id, pc = col.id, active](Tape& tt, int self) {
        const DenseMatrix& g = tt.grad(self);
        const DenseMatrix& q = tt.value(self);
        const DenseMatrix& cv = tt.value(pc);
        if (tt.requires_grad(pa)) {
          DenseMatrix& ga = tt.grad(pa);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            if (!active[r]) continue;
            const double inv = 1.0 / cv(r, 0);
            for (std::size_t j = 0; j < g.cols(); ++j) ga(r, j) += g(r, j) * inv;
          }
        }
        if (tt.requires_grad(pc)) {
          DenseMatrix& gc = tt.grad(pc);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            if (!active[r]) continue;
            double s = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) s += g(r, j) * q(r, j);
            gc(r, 0) -= s / cv(r, 0);
          }
        }
      },
      "safe_div_col");
  return Var{a.tape, id};
}

Var rowwise_sum(Var a) {
  const DenseMatrix& v = a.value();
  DenseMatrix out(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double s = 0.0;
    const double* row = v.row(r);
    for (std::size_t j = 0; j < v.cols(); ++j) s += row[j];
    out(r, 0) = s;
  }
  int id = tape_of(a).add_node(
      std::move(out), {a.id},
      [pa = a.id](Tape& t, int self) {
        if (!t.requires_grad(pa)) return;
        const DenseMatrix& g = t.grad(self);
        DenseMatrix& ga = t.grad(pa);
        for (std::size_t r = 0; r < ga.rows(); ++r)
          for (std::size_t j = 0; j < ga.cols(); ++j) ga(r, j) += g(r, 0);
      },
      "rowwise_sum");
  return Var{a.tape, id};
}

Var sum_all(Var a) {
  const DenseMatrix& v = a.value();
  DenseMatrix out(1, 1);
  double s = 0.0;
  for (double x : v.values()) s += x;
  out(0, 0) = s;
  int id = tape_of(a).add_node(
      std::move(out), {a.id},
      [pa = a.id](Tape& t, int self) {
        if (!t.requires_grad(pa)) return;
        const double g = t.grad(self)(0, 0);
        for (double& x : t.grad(pa).values()) x += g;
      },
      "sum_all");
  return Var{a.tape, id};
}

Var mean_all(Var a) {
  const double inv = 1.0 / static_cast<double>(a.value().size());
  return scale(sum_all(a), inv);
}

Var spmm(const std::vector<std::size_t>& offsets,
         const std::vector<std::uint32_t>& targets, Var x) {
  const std::size_t n = offsets.size() - 1;
  if (x.value().rows() != n) throw ShapeError("spmm: row count does not match adjacency");
  // own a copy of the CSR arrays: backward may outlive the caller's scope
  auto csr = std::make_shared<
      std::pair<std::vector<std::size_t>, std::vector<std::uint32_t>>>(offsets,
                                                                       targets);
  auto apply = [csr](const DenseMatrix& in) {
    const auto& offs = csr->first;
    const auto& tgts = csr->second;
    DenseMatrix out(in.rows(), in.cols(), 0.0);
    const std::size_t m = in.cols();
    for (std::size_t r = 0; r < in.rows(); ++r) {
      double* orow = out.row(r);
      for (std::size_t e = offs[r]; e < offs[r + 1]; ++e) {
        const double* irow = in.row(tgts[e]);
        for (std::size_t j = 0; j < m; ++j) orow[j] += irow[j];
      }
    }
    return out;
  };
  const DenseMatrix& v = x.value();
  DenseMatrix out = apply(v);
  int id = tape_of(x).add_node(
      std::move(out), {x.id},
      [px = x.id, apply](Tape& t, int self) {
        if (!t.requires_grad(px)) return;
        t.grad(px).add_scaled(apply(t.grad(self)), 1.0);
      },
      "spmm");
  return Var{x.tape, id};
}

Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
  const DenseMatrix& v = logits.value();
  if (labels.size() != v.rows())
    throw ShapeError("softmax_cross_entropy: label count != logit rows");
  DenseMatrix probs(v.rows(), v.cols());
  double loss = 0.0;
  for (std::size_t r = 0; r < v.rows(); ++r) {
    const double* row = v.row(r);
    double mx = row[0];
    for (std::size_t j = 1; j < v.cols(); ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < v.cols(); ++j) {
      probs(r, j) = std::exp(row[j] - mx);
      sum += probs(r, j);
    }
    for (std::size_t j = 0; j < v.cols(); ++j) probs(r, j) /= sum;
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= v.cols())
      throw ShapeError("softmax_cross_entropy: label out of range");
    loss -= std::log(std::max(probs(r, y), 1e-300));
  }
  loss /= static_cast<double>(v.rows());
  DenseMatrix out(1, 1);
  out(0, 0) = loss;
  int id = tape_of(logits).add_node(
      std::move(out), {logits.id},
      [pl = logits.id, probs, labels](Tape& t, int self) {
        if (!t.requires_grad(pl)) return;
        const double g = t.grad(self)(0, 0) / static_cast<double>(probs.rows());
        DenseMatrix& gl = t.grad(pl);
        for (std::size_t r = 0; r < probs.rows(); ++r)
          for (std::size_t j = 0; j < probs.cols(); ++j) {
            double delta = (static_cast<std::size_t>(labels[r]) == j) ? 1.0 : 0.0;
            gl(r, j) += g * (probs(r, j) - delta);
          }
      },
      "softmax_cross_entropy");
  return Var{logits.tape, id};
}

}  // namespace cimage::nn
