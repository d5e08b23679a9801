#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "desalign/tensor/dense.hpp"
#include "desalign/tensor/sparse.hpp"

namespace desalign::energy {

using tensor::DenseMatrix;
using tensor::SparseMatrix;

/// tr(XᵀΔX), accumulated row by row as Σ_i ⟨X_i, (ΔX)_i⟩.
double dirichlet_energy(const DenseMatrix& x, const SparseMatrix& laplacian);

/// ½ Σ_ij a_ij ‖x_i/√d_i − x_j/√d_j‖² over the stored entries of
/// `adjacency` with degrees `degree`. Equals the trace form when the degrees
/// are the row sums of the adjacency and no row is empty, which is always
/// the case for self-loop operators.
double dirichlet_energy_edgewise(const DenseMatrix& x, const SparseMatrix& adjacency,
                                 const std::vector<double>& degree);

struct EnergyReport {
  double energy = 0.0;            ///< 𝓛 of X̂ (interpolation) or of X_prev·Wᵀ (layer)
  double reference_energy = 0.0;  ///< 𝓛 of X (interpolation) or of X_prev (layer)
  double lambda_max = 0.0;
  bool lambda_converged = true;
  double norm_max = 0.0;  ///< M
  double norm_min = 0.0;  ///< m
  double gap = 0.0;       ///< |𝓛(X̂) − 𝓛(X)|
  double distance = 0.0;  ///< ‖X̂ − X‖₂
  double first_order = 0.0;
  double lower = 0.0;
  /// Unset when the bound is undefined (m = 0).
  std::optional<double> upper;
  /// The asserted inequality failed beyond `slack`.
  bool violated = false;
  /// The reported-only inequality failed (interpolation m-side).
  bool diagnostic_violated = false;
};

/// Compares X̂ with X through the energy gap. Asserted direction:
/// ‖X̂ − X‖₂ ≥ gap / (2·λ_max·M). Reported only: ‖X̂ − X‖₂ ≤ gap / (2·λ_max·m).
/// Also records the first-order term 2⟨ΔX, X̂ − X⟩, which never exceeds
/// 𝓛(X̂) − 𝓛(X) for a PSD Δ.
EnergyReport interpolation_bounds(const DenseMatrix& x, const DenseMatrix& x_hat, const SparseMatrix& laplacian,
                                  double slack = 1e-9);

/// p_min·𝓛(X_prev) ≤ 𝓛(X_prev·Wᵀ) ≤ p_max·𝓛(X_prev), with p the squared
/// extreme singular values of the square W.
EnergyReport layer_energy_bounds(const DenseMatrix& x_prev, const DenseMatrix& w, const SparseMatrix& laplacian,
                                 double slack = 1e-9);

struct ConstraintConfig {
  double c_min = 0.1;
  double c_max = 2.0;
};

struct ConstraintStatus {
  bool satisfied = true;
  double penalty = 0.0;
  double lower = 0.0;  ///< c_min·E_km1
  double upper = 0.0;  ///< c_max·E_0
};

/// c_min·E_km1 ≤ E_k ≤ c_max·E_0 with hinge penalty
/// max(0, c_min·E_km1 − E_k) + max(0, E_k − c_max·E_0).
ConstraintStatus constraint_monitor(double e_k, double e_km1, double e_0, const ConstraintConfig& cfg = {});

struct EnergyTrajectoryRow {
  std::size_t epoch = 0;
  double e_0 = 0.0;
  double e_km1 = 0.0;
  double e_k = 0.0;
  ConstraintStatus status;
};

/// CSV with header epoch,E_0,E_km1,E_k,lower,upper,violated.
void write_trajectory_csv(const std::vector<EnergyTrajectoryRow>& rows, std::ostream& out);

}  // namespace desalign::energy
