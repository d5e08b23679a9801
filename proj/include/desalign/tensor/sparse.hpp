#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "desalign/tensor/dense.hpp"

namespace desalign::tensor {

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols);

  /// Duplicate (row, col) entries are summed. Explicit zeros are kept so the
  /// sparsity pattern can encode structure (e.g. attention masks).
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries);
  static SparseMatrix identity(std::size_t n);
  static SparseMatrix from_dense(const DenseMatrix& m, double drop_tol = 0.0);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }
  bool square() const noexcept { return rows_ == cols_; }

  std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const std::size_t> col_idx() const noexcept { return col_idx_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Entry lookup by binary search; 0 when absent.
  double at(std::size_t r, std::size_t c) const;

  DenseMatrix multiply(const DenseMatrix& x) const;
  std::vector<double> multiply(std::span<const double> x) const;
  DenseMatrix to_dense() const;

  bool is_symmetric(double tol = 1e-12) const;
  bool all_finite() const;

  /// Dense copy of the sub-block rows × cols (index lists in caller order).
  DenseMatrix block(std::span<const std::size_t> rows, std::span<const std::size_t> cols) const;

  /// Ends of the union of Gershgorin discs (bounds on the real spectrum).
  double gershgorin_lower() const;
  double gershgorin_upper() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

SparseMatrix block_diagonal(const SparseMatrix& a, const SparseMatrix& b);

}  // namespace desalign::tensor
