#pragma once

#include <cstddef>
#include <vector>

#include "desalign/tensor/dense.hpp"
#include "desalign/tensor/sparse.hpp"

namespace desalign::tensor {

struct EigenEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  /// False when the iteration cap was hit before the tolerance was met.
  bool converged = false;
};

inline constexpr std::size_t kPowerIterationCap = 1000;

/// Largest (algebraic) eigenvalue of a symmetric matrix by power iteration
/// with a Rayleigh-quotient readout. The start vector comes from a fixed seed.
/// A Gershgorin shift is applied when the spectrum may reach below zero so
/// the iteration always targets the top of the spectrum. The Rayleigh
/// quotient never exceeds the true eigenvalue.
EigenEstimate lambda_max(const SparseMatrix& matrix, std::size_t iters = kPowerIterationCap, double tol = 1e-12);

/// Spectral norm ‖X‖₂, via power iteration on XᵀX.
double spectral_norm(const DenseMatrix& x, std::size_t iters = kPowerIterationCap, double tol = 1e-14);

/// All eigenvalues of a dense symmetric matrix (cyclic Jacobi), ascending.
std::vector<double> symmetric_eigenvalues(const DenseMatrix& a, double tol = 1e-15, std::size_t max_sweeps = 100);

struct SingularValueBounds {
  double p_min = 0.0;  ///< smallest squared singular value
  double p_max = 0.0;  ///< largest squared singular value
};

/// Squares of the extreme singular values of a square W, read off the
/// eigenvalues of WᵀW.
SingularValueBounds singular_value_bounds(const DenseMatrix& w);

/// Solves M·X = B for symmetric positive-definite M by Cholesky
/// factorization. Throws NumericalError naming the failing pivot when M is
/// not positive definite.
DenseMatrix solve_spd(const DenseMatrix& m, const DenseMatrix& b);

}  // namespace desalign::tensor
