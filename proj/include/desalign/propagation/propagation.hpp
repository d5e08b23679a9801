#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "desalign/tensor/dense.hpp"
#include "desalign/tensor/sparse.hpp"

namespace desalign::propagation {

using tensor::DenseMatrix;
using tensor::SparseMatrix;

struct PropagationState {
  DenseMatrix x;
  DenseMatrix boundary;     ///< the initial features; clamped rows are reset to these
  std::vector<bool> known;  ///< true = clamped
  std::size_t iteration = 0;
  std::vector<DenseMatrix> snapshots;  ///< X^(1), X^(2), ...
};

PropagationState make_state(const DenseMatrix& x0, std::vector<bool> known);

/// One explicit Euler step X ← X − h·ΔX = (1 − h)·X + h·ÃX, followed by
/// resetting the known rows. With h = 1 this is X ← ÃX.
void advance(PropagationState& state, const SparseMatrix& normalized, double step = 1.0);

/// Functional form of `advance`.
PropagationState propagation_step(const PropagationState& state, const SparseMatrix& normalized, double step = 1.0);

/// Runs up to `n_p` steps and returns the snapshots X^(1)..X^(n). When
/// `tol` > 0 it stops after the first step whose max-abs change is below
/// `tol`, so fewer than `n_p` snapshots may come back.
std::vector<DenseMatrix> propagate(const DenseMatrix& x0, const SparseMatrix& normalized,
                                   const std::vector<bool>& known, std::size_t n_p, double tol = 0.0,
                                   double step = 1.0);

/// Harmonic extension: the rows flagged in `free_rows` are replaced by
/// −Δ_ff⁻¹ · Δ_fb · X_b, where b is every other row. Throws NumericalError
/// when a connected group of free rows has no edge into the fixed rows.
DenseMatrix closed_form_interpolation(const DenseMatrix& x, const SparseMatrix& laplacian,
                                      const std::vector<bool>& free_rows);

/// Mean over j of the cosine similarity of source and target snapshot j.
DenseMatrix averaged_similarity(const std::vector<DenseMatrix>& source, const std::vector<DenseMatrix>& target);

/// Writes snapshot j to `<dir>/<prefix>_<j>.txt` in the feature-file
/// format, with the clamp mask as `<dir>/<prefix>_<j>.mask`.
void dump_snapshots(const std::vector<DenseMatrix>& snapshots, const std::vector<bool>& known,
                    const std::string& dir, const std::string& prefix);

}  // namespace desalign::propagation
