#include "desalign/energy/energy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

#include "desalign/errors.hpp"
#include "desalign/tensor/linalg.hpp"

namespace desalign::energy {

namespace {

std::string shape(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

void check_laplacian(const DenseMatrix& x, const SparseMatrix& laplacian, const char* op) {
  if (!laplacian.square() || laplacian.rows() != x.rows()) {
    throw StructuralError(std::string(op) + ": Laplacian " + shape(laplacian.rows(), laplacian.cols()) +
                          " does not match features " + shape(x.rows(), x.cols()));
  }
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

double dirichlet_energy(const DenseMatrix& x, const SparseMatrix& laplacian) {
  check_laplacian(x, laplacian, "dirichlet_energy");
  const DenseMatrix lx = laplacian.multiply(x);
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double row = 0.0;
    auto a = x.row(i);
    auto b = lx.row(i);
    for (std::size_t c = 0; c < a.size(); ++c) row += a[c] * b[c];
    total += row;
  }
  return total;
}

double dirichlet_energy_edgewise(const DenseMatrix& x, const SparseMatrix& adjacency,
                                 const std::vector<double>& degree) {
  if (!adjacency.square() || adjacency.rows() != x.rows() || degree.size() != x.rows())
    throw StructuralError("dirichlet_energy_edgewise: adjacency, degrees and features disagree in size");
  const auto rp = adjacency.row_ptr();
  const auto ci = adjacency.col_idx();
  const auto vals = adjacency.values();
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double si = 1.0 / std::sqrt(std::max(degree[i], 1e-300));
    for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) {
      const std::size_t j = ci[k];
      const double sj = 1.0 / std::sqrt(std::max(degree[j], 1e-300));
      double sq = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double diff = x(i, c) * si - x(j, c) * sj;
        sq += diff * diff;
      }
      total += vals[k] * sq;
    }
  }
  return 0.5 * total;
}

EnergyReport interpolation_bounds(const DenseMatrix& x, const DenseMatrix& x_hat, const SparseMatrix& laplacian,
                                  double slack) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols())
    throw StructuralError("interpolation_bounds: X is " + shape(x.rows(), x.cols()) + " but X_hat is " +
                          shape(x_hat.rows(), x_hat.cols()));
  check_laplacian(x, laplacian, "interpolation_bounds");

  EnergyReport r;
  r.reference_energy = dirichlet_energy(x, laplacian);
  r.energy = dirichlet_energy(x_hat, laplacian);
  r.gap = std::abs(r.energy - r.reference_energy);
  const tensor::EigenEstimate lam = tensor::lambda_max(laplacian);
  r.lambda_max = lam.value;
  r.lambda_converged = lam.converged;
  const double nx = tensor::spectral_norm(x);
  const double nh = tensor::spectral_norm(x_hat);
  r.norm_max = std::max(nx, nh);
  r.norm_min = std::min(nx, nh);
  const DenseMatrix diff = x_hat - x;
  r.distance = tensor::spectral_norm(diff);
  r.first_order = 2.0 * tensor::frobenius_inner(laplacian.multiply(x), diff);

  const double denom_max = 2.0 * r.lambda_max * r.norm_max;
  r.lower = denom_max > 0.0 ? r.gap / denom_max : 0.0;
  r.violated = r.distance < r.lower - slack;

  const double denom_min = 2.0 * r.lambda_max * r.norm_min;
  if (denom_min > 0.0) {
    r.upper = r.gap / denom_min;
    r.diagnostic_violated = r.distance > *r.upper + slack;
  }
  return r;
}

EnergyReport layer_energy_bounds(const DenseMatrix& x_prev, const DenseMatrix& w, const SparseMatrix& laplacian,
                                 double slack) {
  if (w.rows() != w.cols() || w.cols() != x_prev.cols())
    throw StructuralError("layer_energy_bounds: W is " + shape(w.rows(), w.cols()) + ", features have " +
                          std::to_string(x_prev.cols()) + " columns");
  check_laplacian(x_prev, laplacian, "layer_energy_bounds");

  EnergyReport r;
  r.reference_energy = dirichlet_energy(x_prev, laplacian);
  r.energy = dirichlet_energy(tensor::matmul_nt(x_prev, w), laplacian);
  const tensor::SingularValueBounds p = tensor::singular_value_bounds(w);
  r.lower = p.p_min * r.reference_energy;
  r.upper = p.p_max * r.reference_energy;
  const double tol = slack * std::max(1.0, std::abs(*r.upper));
  r.violated = r.energy < r.lower - tol || r.energy > *r.upper + tol;
  return r;
}

ConstraintStatus constraint_monitor(double e_k, double e_km1, double e_0, const ConstraintConfig& cfg) {
  if (!(cfg.c_min > 0.0) || !(cfg.c_max > 0.0)) throw ConfigError("constraint bounds c_min and c_max must be positive");
  ConstraintStatus s;
  s.lower = cfg.c_min * e_km1;
  s.upper = cfg.c_max * e_0;
  s.penalty = std::max(0.0, s.lower - e_k) + std::max(0.0, e_k - s.upper);
  s.satisfied = s.lower <= e_k && e_k <= s.upper;
  return s;
}

void write_trajectory_csv(const std::vector<EnergyTrajectoryRow>& rows, std::ostream& out) {
  out << "epoch,E_0,E_km1,E_k,lower,upper,violated\n";
  for (const auto& row : rows) {
    out << row.epoch << ',' << fmt(row.e_0) << ',' << fmt(row.e_km1) << ',' << fmt(row.e_k) << ','
        << fmt(row.status.lower) << ',' << fmt(row.status.upper) << ',' << (row.status.satisfied ? 0 : 1) << '\n';
  }
}

}  // namespace desalign::energy
