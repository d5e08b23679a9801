#include "desalign/tensor/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "desalign/errors.hpp"

namespace desalign::tensor {

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
  for (const auto& t : entries) {
    if (t.row >= rows || t.col >= cols) {
      throw StructuralError("SparseMatrix: triplet (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                            ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix m(rows, cols);
  m.col_idx_.reserve(entries.size());
  m.values_.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& t = entries[i];
    if (i > 0 && entries[i - 1].row == t.row && entries[i - 1].col == t.col) {
      m.values_.back() += t.value;
      continue;
    }
    m.col_idx_.push_back(t.col);
    m.values_.push_back(t.value);
    ++m.row_ptr_[t.row + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
  return m;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<Triplet> t;
  t.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(t));
}

SparseMatrix SparseMatrix::from_dense(const DenseMatrix& m, double drop_tol) {
  std::vector<Triplet> t;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      if (std::abs(m(r, c)) > drop_tol) t.push_back({r, c, m(r, c)});
  return from_triplets(m.rows(), m.cols(), std::move(t));
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto begin = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
  const auto end = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
  const auto it = std::lower_bound(begin, end, c);
  if (it == end || *it != c) return 0.0;
  return values_[static_cast<std::size_t>(it - col_idx_.begin())];
}

DenseMatrix SparseMatrix::multiply(const DenseMatrix& x) const {
  if (x.rows() != cols_) {
    throw StructuralError("SparseMatrix::multiply: " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                          " * " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
  DenseMatrix out(rows_, x.cols());
  const std::size_t d = x.cols();
  for (std::size_t r = 0; r < rows_; ++r) {
    double* orow = out.row(r).data();
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      const double v = values_[k];
      const double* xrow = x.row(col_idx_[k]).data();
      for (std::size_t j = 0; j < d; ++j) orow[j] += v * xrow[j];
    }
  }
  return out;
}

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
  if (x.size() != cols_) throw StructuralError("SparseMatrix::multiply: vector length mismatch");
  std::vector<double> out(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    double acc = 0.0;
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) acc += values_[k] * x[col_idx_[k]];
    out[r] = acc;
  }
  return out;
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix out(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) out(r, col_idx_[k]) = values_[k];
  return out;
}

bool SparseMatrix::is_symmetric(double tol) const {
  if (!square()) return false;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      const double v = values_[k];
      const double vt = at(col_idx_[k], r);
      if (std::abs(v - vt) > tol * std::max(1.0, std::abs(v))) return false;
    }
  }
  return true;
}

bool SparseMatrix::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix SparseMatrix::block(std::span<const std::size_t> rows, std::span<const std::size_t> cols) const {
  // position of each global column inside the requested column list
  std::vector<std::size_t> local(cols_, std::numeric_limits<std::size_t>::max());
  for (std::size_t j = 0; j < cols.size(); ++j) local.at(cols[j]) = j;
  DenseMatrix out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= rows_) throw StructuralError("SparseMatrix::block: row index out of range");
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      const std::size_t j = local[col_idx_[k]];
      if (j != std::numeric_limits<std::size_t>::max()) out(i, j) = values_[k];
    }
  }
  return out;
}

double SparseMatrix::gershgorin_lower() const {
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < rows_; ++r) {
    double diag = 0.0;
    double radius = 0.0;
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      if (col_idx_[k] == r) diag = values_[k];
      else radius += std::abs(values_[k]);
    }
    lo = std::min(lo, diag - radius);
  }
  return rows_ == 0 ? 0.0 : lo;
}

double SparseMatrix::gershgorin_upper() const {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < rows_; ++r) {
    double diag = 0.0;
    double radius = 0.0;
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      if (col_idx_[k] == r) diag = values_[k];
      else radius += std::abs(values_[k]);
    }
    hi = std::max(hi, diag + radius);
  }
  return rows_ == 0 ? 0.0 : hi;
}

SparseMatrix block_diagonal(const SparseMatrix& a, const SparseMatrix& b) {
  std::vector<Triplet> t;
  t.reserve(a.nnz() + b.nnz());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t k = a.row_ptr()[r]; k < a.row_ptr()[r + 1]; ++k)
      t.push_back({r, a.col_idx()[k], a.values()[k]});
  for (std::size_t r = 0; r < b.rows(); ++r)
    for (std::size_t k = b.row_ptr()[r]; k < b.row_ptr()[r + 1]; ++k)
      t.push_back({a.rows() + r, a.cols() + b.col_idx()[k], b.values()[k]});
  return SparseMatrix::from_triplets(a.rows() + b.rows(), a.cols() + b.cols(), std::move(t));
}

}  // namespace desalign::tensor
