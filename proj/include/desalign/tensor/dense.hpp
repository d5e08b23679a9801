#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace desalign::tensor {

/// Row-major matrix of doubles with value semantics.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  DenseMatrix transpose() const;
  bool all_finite() const;

  bool operator==(const DenseMatrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Throw StructuralError on shape mismatch.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// a · bᵀ without materializing the transpose.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
/// aᵀ · b without materializing the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix operator*(double s, const DenseMatrix& a);

/// Sum of elementwise products, i.e. ⟨a, b⟩_F.
double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b);
double frobenius_norm(const DenseMatrix& a);
double max_abs(const DenseMatrix& a);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix select_rows(const DenseMatrix& a, std::span<const std::size_t> rows);
DenseMatrix hconcat(std::span<const DenseMatrix> blocks);
DenseMatrix vconcat(std::span<const DenseMatrix> blocks);

/// Rows scaled to unit L2 norm; rows with zero norm stay zero.
DenseMatrix l2_normalize_rows(const DenseMatrix& a);

}  // namespace desalign::tensor
