#include "desalign/tensor/dense.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "desalign/errors.hpp"

namespace desalign::tensor {

namespace {

std::string shape(const DenseMatrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw StructuralError(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw StructuralError("DenseMatrix: data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw StructuralError("DenseMatrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
  DenseMatrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool DenseMatrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw StructuralError("matmul: " + shape(a) + " * " + shape(b));
  DenseMatrix out(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  const std::size_t nc = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* orow = out.row(i).data();
    const double* arow = a.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < nc; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw StructuralError("matmul_nt: " + shape(a) + " * " + shape(b) + "^T");
  DenseMatrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw StructuralError("matmul_tn: " + shape(a) + "^T * " + shape(b));
  DenseMatrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* arow = a.row(k).data();
    const double* brow = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* orow = out.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "add");
  DenseMatrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return out;
}

DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "sub");
  DenseMatrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  return out;
}

DenseMatrix operator*(double s, const DenseMatrix& a) {
  DenseMatrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "frobenius_inner");
  double acc = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) acc += ad[i] * bd[i];
  return acc;
}

double frobenius_norm(const DenseMatrix& a) { return std::sqrt(frobenius_inner(a, a)); }

double max_abs(const DenseMatrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) m = std::max(m, std::abs(ad[i] - bd[i]));
  return m;
}

DenseMatrix select_rows(const DenseMatrix& a, std::span<const std::size_t> rows) {
  DenseMatrix out(rows.size(), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows()) throw StructuralError("select_rows: index out of range");
    std::copy_n(a.row(rows[i]).data(), a.cols(), out.row(i).data());
  }
  return out;
}

DenseMatrix hconcat(std::span<const DenseMatrix> blocks) {
  if (blocks.empty()) return {};
  const std::size_t rows = blocks.front().rows();
  std::size_t cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != rows) throw StructuralError("hconcat: row count mismatch");
    cols += b.cols();
  }
  DenseMatrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.row(r).data();
    for (const auto& b : blocks) dst = std::copy_n(b.row(r).data(), b.cols(), dst);
  }
  return out;
}

DenseMatrix vconcat(std::span<const DenseMatrix> blocks) {
  if (blocks.empty()) return {};
  const std::size_t cols = blocks.front().cols();
  std::vector<double> data;
  std::size_t rows = 0;
  for (const auto& b : blocks) {
    if (b.cols() != cols) throw StructuralError("vconcat: column count mismatch");
    data.insert(data.end(), b.data().begin(), b.data().end());
    rows += b.rows();
  }
  return DenseMatrix(rows, cols, std::move(data));
}

DenseMatrix l2_normalize_rows(const DenseMatrix& a) {
  DenseMatrix out = a;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double sq = 0.0;
    for (double v : row) sq += v * v;
    if (sq == 0.0) continue;
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : row) v *= inv;
  }
  return out;
}

}  // namespace desalign::tensor
