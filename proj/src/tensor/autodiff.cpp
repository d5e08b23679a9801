#include "desalign/tensor/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "desalign/errors.hpp"

namespace desalign::tensor {

namespace {

std::string shape(const DenseMatrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw StructuralError("autodiff: invalid Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw StructuralError("autodiff: operands recorded on different tapes");
  return tape_of(a);
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw StructuralError(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
}

// dst += src
void accumulate(DenseMatrix& dst, const DenseMatrix& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void require_pattern(const SparseMatrix& p, const char* op) {
  if (!p.square()) throw StructuralError(std::string(op) + ": pattern must be square");
}

}  // namespace

// ---- Var / Tape -------------------------------------------------------------

const DenseMatrix& Var::value() const { return tape_of(*this).value(id_); }

double Var::scalar() const {
  const DenseMatrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw StructuralError("Var::scalar: value is " + shape(v));
  return v(0, 0);
}

Var Tape::constant(DenseMatrix value) { return record(std::move(value), {}, nullptr); }

Var Tape::parameter(DenseMatrix value) {
  Var v = record(std::move(value), {}, nullptr);
  nodes_[v.id()].requires_grad = true;
  params_.push_back(v);
  return v;
}

Var Tape::record(DenseMatrix value, std::span<const Var> parents, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape() != this) throw StructuralError("autodiff: parent recorded on a different tape");
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

DenseMatrix& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols())
    n.grad = DenseMatrix(n.value.rows(), n.value.cols());
  return n.grad;
}

const DenseMatrix& Tape::grad(Var v) { return grad_buffer(v.id()); }

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw StructuralError("Tape::backward: loss recorded on a different tape");
  const DenseMatrix& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) throw StructuralError("Tape::backward: loss must be 1x1, got " + shape(lv));
  for (auto& n : nodes_) n.grad = DenseMatrix();
  grad_buffer(loss.id())(0, 0) = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward) continue;
    if (n.grad.empty()) continue;  // not on a path from the loss
    n.backward(*this, id);
  }
}

// ---- linear algebra ---------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Var parents[] = {a, b};
  return t.record(tensor::matmul(a.value(), b.value()), parents, [a, b](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    if (tp.requires_grad(a.id())) accumulate(tp.grad_buffer(a.id()), tensor::matmul_nt(g, b.value()));
    if (tp.requires_grad(b.id())) accumulate(tp.grad_buffer(b.id()), tensor::matmul_tn(a.value(), g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Var parents[] = {a, b};
  return t.record(tensor::matmul_nt(a.value(), b.value()), parents, [a, b](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    if (tp.requires_grad(a.id())) accumulate(tp.grad_buffer(a.id()), tensor::matmul(g, b.value()));
    if (tp.requires_grad(b.id())) accumulate(tp.grad_buffer(b.id()), tensor::matmul_tn(g, a.value()));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const Var parents[] = {a, b};
  return t.record(a.value() + b.value(), parents, [a, b](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    if (tp.requires_grad(a.id())) accumulate(tp.grad_buffer(a.id()), g);
    if (tp.requires_grad(b.id())) accumulate(tp.grad_buffer(b.id()), g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const Var parents[] = {a, b};
  return t.record(a.value() - b.value(), parents, [a, b](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    if (tp.requires_grad(a.id())) accumulate(tp.grad_buffer(a.id()), g);
    if (tp.requires_grad(b.id())) {
      auto gb = tp.grad_buffer(b.id()).data();
      auto gs = g.data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gs[i];
    }
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "hadamard");
  DenseMatrix out = a.value();
  {
    auto o = out.data();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  }
  const Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b](Tape& tp, std::size_t self) {
    auto g = tp.grad_buffer(self).data();
    if (tp.requires_grad(a.id())) {
      auto ga = tp.grad_buffer(a.id()).data();
      auto bv = b.value().data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(b.id())) {
      auto gb = tp.grad_buffer(b.id()).data();
      auto av = a.value().data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const Var parents[] = {a};
  return t.record(s * a.value(), parents, [a, s](Tape& tp, std::size_t self) {
    auto g = tp.grad_buffer(self).data();
    auto ga = tp.grad_buffer(a.id()).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  DenseMatrix out = a.value();
  for (double& v : out.data()) v += s;
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a](Tape& tp, std::size_t self) {
    accumulate(tp.grad_buffer(a.id()), tp.grad_buffer(self));
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const DenseMatrix& av = a.value();
  const DenseMatrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols())
    throw StructuralError("add_row: " + shape(av) + " + " + shape(rv));
  DenseMatrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv(0, c);
  const Var parents[] = {a, row};
  return t.record(std::move(out), parents, [a, row](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    if (tp.requires_grad(a.id())) accumulate(tp.grad_buffer(a.id()), g);
    if (tp.requires_grad(row.id())) {
      DenseMatrix& gr = tp.grad_buffer(row.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr(0, c) += g(r, c);
    }
  });
}

Var mul_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const DenseMatrix& av = a.value();
  const DenseMatrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols())
    throw StructuralError("mul_row: " + shape(av) + " * " + shape(rv));
  DenseMatrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= rv(0, c);
  const Var parents[] = {a, row};
  return t.record(std::move(out), parents, [a, row](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    const DenseMatrix& av = a.value();
    const DenseMatrix& rv = row.value();
    if (tp.requires_grad(a.id())) {
      DenseMatrix& ga = tp.grad_buffer(a.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) * rv(0, c);
    }
    if (tp.requires_grad(row.id())) {
      DenseMatrix& gr = tp.grad_buffer(row.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr(0, c) += g(r, c) * av(r, c);
    }
  });
}

Var mul_col(Var a, Var col) {
  Tape& t = tape_of(a, col);
  const DenseMatrix& av = a.value();
  const DenseMatrix& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != av.rows())
    throw StructuralError("mul_col: " + shape(av) + " * " + shape(cv));
  DenseMatrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= cv(r, 0);
  const Var parents[] = {a, col};
  return t.record(std::move(out), parents, [a, col](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    const DenseMatrix& av = a.value();
    const DenseMatrix& cv = col.value();
    if (tp.requires_grad(a.id())) {
      DenseMatrix& ga = tp.grad_buffer(a.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) * cv(r, 0);
    }
    if (tp.requires_grad(col.id())) {
      DenseMatrix& gc = tp.grad_buffer(col.id());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) acc += g(r, c) * av(r, c);
        gc(r, 0) += acc;
      }
    }
  });
}

// ---- elementwise nonlinearities --------------------------------------------

Var relu(Var a) {
  Tape& t = tape_of(a);
  DenseMatrix out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a](Tape& tp, std::size_t self) {
    auto g = tp.grad_buffer(self).data();
    auto ga = tp.grad_buffer(a.id()).data();
    auto av = a.value().data();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) ga[i] += g[i];
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  DenseMatrix out = a.value();
  for (double& v : out.data()) v = std::exp(v);
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a](Tape& tp, std::size_t self) {
    auto g = tp.grad_buffer(self).data();
    auto y = tp.value(self).data();
    auto ga = tp.grad_buffer(a.id()).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  DenseMatrix out = a.value();
  for (double& v : out.data()) {
    if (!(v > 0.0)) throw NumericalError("log: non-positive argument " + std::to_string(v));
    v = std::log(v);
  }
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a](Tape& tp, std::size_t self) {
    auto g = tp.grad_buffer(self).data();
    auto av = a.value().data();
    auto ga = tp.grad_buffer(a.id()).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / av[i];
  });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  DenseMatrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    if (row.empty()) continue;
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    for (double& v : row) v /= total;
  }
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    const DenseMatrix& y = tp.value(self);
    DenseMatrix& ga = tp.grad_buffer(a.id());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double inner = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) inner += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - inner);
    }
  });
}

Var layer_norm_rows(Var a, double eps) {
  Tape& t = tape_of(a);
  const DenseMatrix& av = a.value();
  const std::size_t n = av.rows();
  const std::size_t d = av.cols();
  if (d == 0) throw StructuralError("layer_norm_rows: zero columns");
  DenseMatrix out(n, d);
  std::vector<double> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += av(r, c);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (av(r, c) - mu) * (av(r, c) - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) out(r, c) = (av(r, c) - mu) * inv_std[r];
  }
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a, inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    const DenseMatrix& y = tp.value(self);
    DenseMatrix& ga = tp.grad_buffer(a.id());
    const double dd = static_cast<double>(y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double mean_g = 0.0;
      double mean_gy = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) {
        mean_g += g(r, c);
        mean_gy += g(r, c) * y(r, c);
      }
      mean_g /= dd;
      mean_gy /= dd;
      for (std::size_t c = 0; c < y.cols(); ++c)
        ga(r, c) += inv_std[r] * (g(r, c) - mean_g - y(r, c) * mean_gy);
    }
  });
}

Var normalize_rows(Var a) {
  Tape& t = tape_of(a);
  const DenseMatrix& av = a.value();
  DenseMatrix out = av;
  std::vector<double> norms(av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double sq = 0.0;
    for (double v : av.row(r)) sq += v * v;
    norms[r] = std::sqrt(sq);
    if (norms[r] == 0.0) continue;
    for (double& v : out.row(r)) v /= norms[r];
  }
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a, norms = std::move(norms)](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    const DenseMatrix& y = tp.value(self);
    DenseMatrix& ga = tp.grad_buffer(a.id());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      if (norms[r] == 0.0) continue;
      double inner = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) inner += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += (g(r, c) - y(r, c) * inner) / norms[r];
    }
  });
}

// ---- structural ---------------------------------------------------------------

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw StructuralError("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  std::vector<DenseMatrix> values;
  values.reserve(parts.size());
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    values.push_back(p.value());
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record(hconcat(values), parts, [ps](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    std::size_t offset = 0;
    for (const Var& p : ps) {
      const std::size_t w = p.value().cols();
      if (tp.requires_grad(p.id())) {
        DenseMatrix& gp = tp.grad_buffer(p.id());
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, offset + c);
      }
      offset += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw StructuralError("concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  std::vector<DenseMatrix> values;
  values.reserve(parts.size());
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    values.push_back(p.value());
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record(vconcat(values), parts, [ps](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    std::size_t offset = 0;
    for (const Var& p : ps) {
      const std::size_t h = p.value().rows();
      if (tp.requires_grad(p.id())) {
        DenseMatrix& gp = tp.grad_buffer(p.id());
        for (std::size_t r = 0; r < h; ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gp(r, c) += g(offset + r, c);
      }
      offset += h;
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& t = tape_of(a);
  const DenseMatrix& av = a.value();
  if (start + count > av.cols()) throw StructuralError("slice_cols: range exceeds " + shape(av));
  DenseMatrix out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, start + c);
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a, start](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    DenseMatrix& ga = tp.grad_buffer(a.id());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, start + c) += g(r, c);
  });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  Tape& t = tape_of(a);
  const DenseMatrix& av = a.value();
  if (start + count > av.rows()) throw StructuralError("slice_rows: range exceeds " + shape(av));
  std::vector<double> data(av.data().begin() + static_cast<std::ptrdiff_t>(start * av.cols()),
                           av.data().begin() + static_cast<std::ptrdiff_t>((start + count) * av.cols()));
  const Var parents[] = {a};
  return t.record(DenseMatrix(count, av.cols(), std::move(data)), parents, [a, start](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    DenseMatrix& ga = tp.grad_buffer(a.id());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(start + r, c) += g(r, c);
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  Tape& t = tape_of(a);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const Var parents[] = {a};
  return t.record(select_rows(a.value(), idx), parents, [a, idx](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    DenseMatrix& ga = tp.grad_buffer(a.id());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(idx[i], c) += g(i, c);
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const Var parents[] = {a};
  return t.record(DenseMatrix(1, 1, total), parents, [a](Tape& tp, std::size_t self) {
    const double g = tp.grad_buffer(self)(0, 0);
    for (double& v : tp.grad_buffer(a.id()).data()) v += g;
  });
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  const DenseMatrix& av = a.value();
  DenseMatrix out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double acc = 0.0;
    for (double v : av.row(r)) acc += v;
    out(r, 0) = acc;
  }
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    DenseMatrix& ga = tp.grad_buffer(a.id());
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(r, 0);
  });
}

// ---- sparse / graph ---------------------------------------------------------

Var spmm(const SparseMatrix& s, Var a) {
  Tape& t = tape_of(a);
  const Var parents[] = {a};
  const SparseMatrix* sp = &s;
  return t.record(s.multiply(a.value()), parents, [a, sp](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    DenseMatrix& ga = tp.grad_buffer(a.id());
    const auto rp = sp->row_ptr();
    const auto ci = sp->col_idx();
    const auto vals = sp->values();
    const std::size_t d = g.cols();
    for (std::size_t r = 0; r < sp->rows(); ++r) {
      const double* grow = g.row(r).data();
      for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
        double* arow = ga.row(ci[k]).data();
        const double v = vals[k];
        for (std::size_t c = 0; c < d; ++c) arow[c] += v * grow[c];
      }
    }
  });
}

Var edge_scores(Var src, Var dst, const SparseMatrix& pattern) {
  Tape& t = tape_of(src, dst);
  require_pattern(pattern, "edge_scores");
  const std::size_t n = pattern.rows();
  if (src.rows() != n || src.cols() != 1 || dst.rows() != n || dst.cols() != 1)
    throw StructuralError("edge_scores: endpoint scores must be " + std::to_string(n) + "x1");
  DenseMatrix out(pattern.nnz(), 1);
  const auto rp = pattern.row_ptr();
  const auto ci = pattern.col_idx();
  const DenseMatrix& sv = src.value();
  const DenseMatrix& dv = dst.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) out(k, 0) = sv(r, 0) + dv(ci[k], 0);
  const Var parents[] = {src, dst};
  const SparseMatrix* pp = &pattern;
  return t.record(std::move(out), parents, [src, dst, pp](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    const auto rp = pp->row_ptr();
    const auto ci = pp->col_idx();
    const bool gs = tp.requires_grad(src.id());
    const bool gd = tp.requires_grad(dst.id());
    for (std::size_t r = 0; r < pp->rows(); ++r)
      for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
        if (gs) tp.grad_buffer(src.id())(r, 0) += g(k, 0);
        if (gd) tp.grad_buffer(dst.id())(ci[k], 0) += g(k, 0);
      }
  });
}

Var edge_softmax(Var scores, const SparseMatrix& pattern) {
  Tape& t = tape_of(scores);
  require_pattern(pattern, "edge_softmax");
  if (scores.rows() != pattern.nnz() || scores.cols() != 1)
    throw StructuralError("edge_softmax: scores must be nnz x 1");
  DenseMatrix out = scores.value();
  const auto rp = pattern.row_ptr();
  for (std::size_t r = 0; r < pattern.rows(); ++r) {
    if (rp[r] == rp[r + 1]) continue;
    double mx = out(rp[r], 0);
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) mx = std::max(mx, out(k, 0));
    double total = 0.0;
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
      out(k, 0) = std::exp(out(k, 0) - mx);
      total += out(k, 0);
    }
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) out(k, 0) /= total;
  }
  const Var parents[] = {scores};
  const SparseMatrix* pp = &pattern;
  return t.record(std::move(out), parents, [scores, pp](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    const DenseMatrix& y = tp.value(self);
    DenseMatrix& gs = tp.grad_buffer(scores.id());
    const auto rp = pp->row_ptr();
    for (std::size_t r = 0; r < pp->rows(); ++r) {
      double inner = 0.0;
      for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) inner += g(k, 0) * y(k, 0);
      for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) gs(k, 0) += y(k, 0) * (g(k, 0) - inner);
    }
  });
}

Var edge_aggregate(Var weights, Var x, const SparseMatrix& pattern) {
  Tape& t = tape_of(weights, x);
  require_pattern(pattern, "edge_aggregate");
  if (weights.rows() != pattern.nnz() || weights.cols() != 1)
    throw StructuralError("edge_aggregate: weights must be nnz x 1");
  if (x.rows() != pattern.cols()) throw StructuralError("edge_aggregate: feature rows must match pattern");
  const DenseMatrix& xv = x.value();
  const DenseMatrix& wv = weights.value();
  const std::size_t d = xv.cols();
  DenseMatrix out(pattern.rows(), d);
  const auto rp = pattern.row_ptr();
  const auto ci = pattern.col_idx();
  for (std::size_t r = 0; r < pattern.rows(); ++r) {
    double* orow = out.row(r).data();
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
      const double w = wv(k, 0);
      const double* xrow = xv.row(ci[k]).data();
      for (std::size_t c = 0; c < d; ++c) orow[c] += w * xrow[c];
    }
  }
  const Var parents[] = {weights, x};
  const SparseMatrix* pp = &pattern;
  return t.record(std::move(out), parents, [weights, x, pp](Tape& tp, std::size_t self) {
    const DenseMatrix& g = tp.grad_buffer(self);
    const DenseMatrix& xv = x.value();
    const DenseMatrix& wv = weights.value();
    const auto rp = pp->row_ptr();
    const auto ci = pp->col_idx();
    const std::size_t d = xv.cols();
    const bool gw = tp.requires_grad(weights.id());
    const bool gx = tp.requires_grad(x.id());
    for (std::size_t r = 0; r < pp->rows(); ++r) {
      const double* grow = g.row(r).data();
      for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
        if (gw) {
          const double* xrow = xv.row(ci[k]).data();
          double acc = 0.0;
          for (std::size_t c = 0; c < d; ++c) acc += grow[c] * xrow[c];
          tp.grad_buffer(weights.id())(k, 0) += acc;
        }
        if (gx) {
          double* gxrow = tp.grad_buffer(x.id()).row(ci[k]).data();
          const double w = wv(k, 0);
          for (std::size_t c = 0; c < d; ++c) gxrow[c] += w * grow[c];
        }
      }
    }
  });
}

// ---- compositions -----------------------------------------------------------

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(std::max<std::size_t>(1, a.value().size()))); }

Var leaky_relu(Var a, double slope) { return sub(relu(a), scale(relu(scale(a, -1.0)), slope)); }

Var minimum(Var a, Var b) { return sub(b, relu(sub(b, a))); }

Var maximum(Var a, double c) { return add_scalar(relu(add_scalar(a, -c)), c); }

Var cosine_similarity(Var a, Var b) { return matmul_nt(normalize_rows(a), normalize_rows(b)); }

// ---- gradient check ---------------------------------------------------------

GradCheckReport grad_check(const LossBuilder& loss_fn, std::span<DenseMatrix* const> params, double eps,
                           double abs_floor) {
  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (DenseMatrix* p : params) vars.push_back(tape.parameter(*p));
    const double v = loss_fn(tape, vars).scalar();
    if (!std::isfinite(v)) throw NumericalError("grad_check: non-finite loss");
    return v;
  };

  GradCheckReport report;
  std::vector<DenseMatrix> tape_grads;
  {
    Tape tape;
    std::vector<Var> vars;
    for (DenseMatrix* p : params) vars.push_back(tape.parameter(*p));
    Var loss = loss_fn(tape, vars);
    report.loss = loss.scalar();
    if (!std::isfinite(report.loss)) throw NumericalError("grad_check: non-finite loss");
    tape.backward(loss);
    for (const Var& v : vars) tape_grads.push_back(tape.grad(v));
  }

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto entries = params[p]->data();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const double saved = entries[i];
      entries[i] = saved + eps;
      const double plus = evaluate();
      entries[i] = saved - eps;
      const double minus = evaluate();
      entries[i] = saved;
      const double fd = (plus - minus) / (2.0 * eps);
      const double tg = tape_grads[p].data()[i];
      const double rel = std::abs(tg - fd) / std::max({std::abs(tg), std::abs(fd), abs_floor});
      ++report.entries_checked;
      if (report.entries_checked == 1 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p;
        report.worst_index = i;
        report.worst_tape_grad = tg;
        report.worst_fd_grad = fd;
      }
    }
  }
  return report;
}

}  // namespace desalign::tensor
