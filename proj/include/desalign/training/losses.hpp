#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "desalign/encoder/encoder.hpp"
#include "desalign/energy/energy.hpp"

namespace desalign::training {

using encoder::ForwardResult;
using mmkg::Modality;
using tensor::DenseMatrix;
using tensor::SparseMatrix;
using tensor::Tape;
using tensor::Var;

/// Reference value of the alignment probability of pair (anchors_i,
/// positives_i) within a batch: γ(i, i') over γ(i, i') plus γ to every other
/// anchor and every other positive, with γ(a, b) = exp(⟨a, b⟩ / τ). Rows are
/// used as given. Returns 1 when the batch has a single pair.
double alignment_probability(const DenseMatrix& anchors, const DenseMatrix& positives, std::size_t i, double tau);

/// The same probability for every pair of the batch, on the tape (B × 1).
Var alignment_probabilities(Var anchors, Var positives, double tau);

struct ModalityLossOptions {
  double tau = 0.1;
  double phi_floor = 1e-6;
  /// Use φ·(−log p̄) instead of −log(φ·p̄).
  bool phi_outside = false;
};

/// Bidirectional loss mean_i −log(φ_i·(p(i→i') + p(i'→i))/2) on row-normalized
/// embeddings. `phi` is B × 1 or invalid (φ = 1). `floored`, when given,
/// receives the number of φ entries lifted to the floor.
Var modality_loss(Var source, Var target, Var phi, const ModalityLossOptions& opts, std::size_t* floored = nullptr);

/// tr(XᵀΔX) on the tape.
Var dirichlet_energy(Var x, const SparseMatrix& laplacian);

struct LossConfig {
  ModalityLossOptions modality;
  bool use_task_0 = true;       ///< L_task^(0) on h^Ori
  bool use_modal_km1 = true;    ///< per-modality losses on h^m
  bool energy_penalty = true;
  double penalty_coef = 0.01;
  energy::ConstraintConfig constraint;
};

struct LossBreakdown {
  double task_0 = 0.0;
  double task_k = 0.0;
  std::map<Modality, double> modal_km1;
  std::map<Modality, double> modal_k;
  double penalty = 0.0;
  double total = 0.0;
  double e_0 = 0.0;
  double e_km1 = 0.0;
  double e_k = 0.0;
  energy::ConstraintStatus constraint;
  std::size_t phi_floored = 0;
};

struct LossTerms {
  Var total;
  LossBreakdown breakdown;
};

/// Joint objective over one batch: task losses on h^Ori and h^Fus, the
/// per-modality losses before and after the attention block weighted by the
/// minimum confidence of each pair, and an optional hinge on the energies
/// E_0 = 𝓛(h^Ori), E_km1 = 𝓛(attention-block midpoint), E_k = 𝓛(h^Fus).
/// Energies are taken on row-normalized embeddings, the same geometry the
/// contrastive terms and the evaluation use.
/// `source_rows` and `target_rows` index the rows of the forward pass.
LossTerms total_loss(const ForwardResult& f, const std::vector<Modality>& modalities, const SparseMatrix& laplacian,
                     const std::vector<std::size_t>& source_rows, const std::vector<std::size_t>& target_rows,
                     const LossConfig& cfg);

}  // namespace desalign::training
