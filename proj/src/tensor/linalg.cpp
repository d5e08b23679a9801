#include "desalign/tensor/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "desalign/errors.hpp"

namespace desalign::tensor {

namespace {

constexpr std::uint64_t kStartVectorSeed = 0x5eed5eedULL;

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Power iteration on a symmetric operator. `apply` computes A·x; `shift`
// is added to the diagonal during the iteration but not to the readout.
template <typename Apply>
EigenEstimate power_iterate(std::size_t n, Apply apply, double shift, std::size_t iters, double tol) {
  EigenEstimate est;
  if (n == 0) {
    est.converged = true;
    return est;
  }
  std::mt19937_64 rng(kStartVectorSeed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = unif(rng);
  double nx = norm2(x);
  for (double& v : x) v /= nx;

  double prev = 0.0;
  for (std::size_t it = 1; it <= iters; ++it) {
    std::vector<double> ax = apply(x);
    const double rayleigh = dot(x, ax);
    est.value = rayleigh;
    est.iterations = it;
    for (std::size_t i = 0; i < n; ++i) ax[i] += shift * x[i];
    const double ny = norm2(ax);
    if (ny == 0.0) {
      est.converged = true;
      return est;
    }
    if (it > 1 && std::abs(rayleigh - prev) <= tol * std::max(std::abs(rayleigh), 1e-300)) {
      est.converged = true;
      return est;
    }
    prev = rayleigh;
    for (std::size_t i = 0; i < n; ++i) x[i] = ax[i] / ny;
  }
  return est;
}

}  // namespace

EigenEstimate lambda_max(const SparseMatrix& matrix, std::size_t iters, double tol) {
  if (!matrix.square()) {
    throw StructuralError("lambda_max: matrix is " + std::to_string(matrix.rows()) + "x" +
                          std::to_string(matrix.cols()) + ", expected square");
  }
  if (!matrix.is_symmetric(1e-12)) throw StructuralError("lambda_max: matrix is not symmetric");
  const double shift = std::max(0.0, -matrix.gershgorin_lower());
  return power_iterate(
      matrix.rows(), [&](const std::vector<double>& x) { return matrix.multiply(x); }, shift, iters, tol);
}

double spectral_norm(const DenseMatrix& x, std::size_t iters, double tol) {
  const DenseMatrix gram = matmul_tn(x, x);
  const std::size_t d = gram.cols();
  auto apply = [&](const std::vector<double>& v) {
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += gram(i, j) * v[j];
      out[i] = acc;
    }
    return out;
  };
  const EigenEstimate est = power_iterate(d, apply, 0.0, iters, tol);
  return std::sqrt(std::max(0.0, est.value));
}

std::vector<double> symmetric_eigenvalues(const DenseMatrix& input, double tol, std::size_t max_sweeps) {
  if (input.rows() != input.cols()) throw StructuralError("symmetric_eigenvalues: matrix not square");
  DenseMatrix a = input;
  const std::size_t n = a.rows();
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        total += a(i, j) * a(i, j);
        if (i != j) off += a(i, j) * a(i, j);
      }
    if (off <= tol * tol * std::max(total, 1e-300)) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // rotation angle zeroing a(p, q)
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

SingularValueBounds singular_value_bounds(const DenseMatrix& w) {
  if (w.rows() != w.cols()) {
    throw StructuralError("singular_value_bounds: W is " + std::to_string(w.rows()) + "x" +
                          std::to_string(w.cols()) + ", expected square");
  }
  if (w.rows() == 0) return {};
  const std::vector<double> eig = symmetric_eigenvalues(matmul_tn(w, w));
  return {std::max(0.0, eig.front()), std::max(0.0, eig.back())};
}

DenseMatrix solve_spd(const DenseMatrix& m, const DenseMatrix& b) {
  const std::size_t n = m.rows();
  if (m.cols() != n) throw StructuralError("solve_spd: matrix not square");
  if (b.rows() != n) throw StructuralError("solve_spd: right-hand side has wrong row count");

  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(m(i, i)));

  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = m(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 1e-14 * std::max(scale, 1e-300))) {
      throw NumericalError("solve_spd: matrix is not positive definite (pivot " + std::to_string(j) +
                           " = " + std::to_string(diag) + ")");
    }
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = m(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / ljj;
    }
  }

  DenseMatrix x = b;
  const std::size_t nrhs = b.cols();
  // forward substitution L·Y = B
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      const double lik = l(i, k);
      for (std::size_t c = 0; c < nrhs; ++c) x(i, c) -= lik * x(k, c);
    }
    for (std::size_t c = 0; c < nrhs; ++c) x(i, c) /= l(i, i);
  }
  // back substitution Lᵀ·X = Y
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t k = ii + 1; k < n; ++k) {
      const double lki = l(k, ii);
      for (std::size_t c = 0; c < nrhs; ++c) x(ii, c) -= lki * x(k, c);
    }
    for (std::size_t c = 0; c < nrhs; ++c) x(ii, c) /= l(ii, ii);
  }
  return x;
}

}  // namespace desalign::tensor
