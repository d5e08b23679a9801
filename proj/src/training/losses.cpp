#include "desalign/training/losses.hpp"

#include <cmath>
#include <string>

#include "desalign/errors.hpp"

namespace desalign::training {

namespace tn = tensor;

namespace {

constexpr double kMasked = -1e30;

void check_finite(double v, const std::string& term) {
  if (!std::isfinite(v)) throw NumericalError("loss term " + term + " is not finite (" + std::to_string(v) + ")");
}

}  // namespace

double alignment_probability(const DenseMatrix& anchors, const DenseMatrix& positives, std::size_t i, double tau) {
  if (anchors.rows() != positives.rows() || anchors.cols() != positives.cols())
    throw StructuralError("alignment_probability: anchor and positive batches differ in shape");
  if (i >= anchors.rows()) throw StructuralError("alignment_probability: pair index outside the batch");
  auto dot = [](std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
  };
  const auto a = anchors.row(i);
  const double pos = dot(a, positives.row(i)) / tau;
  std::vector<double> logits{pos};
  for (std::size_t j = 0; j < anchors.rows(); ++j) {
    if (j == i) continue;
    logits.push_back(dot(a, positives.row(j)) / tau);
    logits.push_back(dot(a, anchors.row(j)) / tau);
  }
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double z = 0;
  for (double l : logits) z += std::exp(l - mx);
  return std::exp(pos - mx) / z;
}

Var alignment_probabilities(Var anchors, Var positives, double tau) {
  if (anchors.rows() != positives.rows())
    throw StructuralError("alignment_probabilities: batches of " + std::to_string(anchors.rows()) + " and " +
                          std::to_string(positives.rows()) + " rows");
  Tape& tape = *anchors.tape();
  const std::size_t b = anchors.rows();
  DenseMatrix mask(b, b);
  for (std::size_t i = 0; i < b; ++i) mask(i, i) = kMasked;
  const Var cross = tn::scale(tn::matmul_nt(anchors, positives), 1.0 / tau);
  const Var self = tn::add(tn::scale(tn::matmul_nt(anchors, anchors), 1.0 / tau), tape.constant(std::move(mask)));
  const Var probs = tn::softmax_rows(tn::concat_cols(std::vector<Var>{cross, self}));
  const Var diag = tn::hadamard(tn::slice_cols(probs, 0, b), tape.constant(DenseMatrix::identity(b)));
  return tn::row_sum(diag);
}

Var modality_loss(Var source, Var target, Var phi, const ModalityLossOptions& opts, std::size_t* floored) {
  const Var a = tn::normalize_rows(source);
  const Var b = tn::normalize_rows(target);
  const Var forward = alignment_probabilities(a, b, opts.tau);
  const Var backward = alignment_probabilities(b, a, opts.tau);
  const Var mean_p = tn::scale(tn::add(forward, backward), 0.5);
  if (!phi.valid()) return tn::scale(tn::mean(tn::log(mean_p)), -1.0);

  if (floored != nullptr)
    for (double v : phi.value().data()) *floored += v < opts.phi_floor;
  const Var w = tn::maximum(phi, opts.phi_floor);
  if (opts.phi_outside) return tn::scale(tn::mean(tn::hadamard(w, tn::log(mean_p))), -1.0);
  return tn::scale(tn::mean(tn::log(tn::hadamard(w, mean_p))), -1.0);
}

Var dirichlet_energy(Var x, const SparseMatrix& laplacian) {
  return tn::sum(tn::hadamard(x, tn::spmm(laplacian, x)));
}

LossTerms total_loss(const ForwardResult& f, const std::vector<Modality>& modalities, const SparseMatrix& laplacian,
                     const std::vector<std::size_t>& source_rows, const std::vector<std::size_t>& target_rows,
                     const LossConfig& cfg) {
  if (source_rows.size() != target_rows.size() || source_rows.empty())
    throw StructuralError("total_loss: batch needs matching, non-empty source and target rows");
  if (modalities.size() != f.h.size())
    throw StructuralError("total_loss: modality list does not match the forward pass");

  LossTerms out;
  LossBreakdown& br = out.breakdown;
  std::vector<Var> parts;
  auto add_term = [&](Var term, const std::string& name) {
    check_finite(term.scalar(), name);
    parts.push_back(term);
    return term.scalar();
  };
  auto rows = [](Var x, const std::vector<std::size_t>& idx) { return tn::gather_rows(x, idx); };

  if (cfg.use_task_0)
    br.task_0 = add_term(modality_loss(rows(f.h_ori, source_rows), rows(f.h_ori, target_rows), Var(), cfg.modality),
                         "L_task^(0)");
  br.task_k = add_term(modality_loss(rows(f.h_fus, source_rows), rows(f.h_fus, target_rows), Var(), cfg.modality),
                       "L_task^(k)");

  const Var conf_s = rows(f.confidence, source_rows);
  const Var conf_t = rows(f.confidence, target_rows);
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    const std::string name(mmkg::modality_name(modalities[m]));
    const Var phi = tn::minimum(tn::slice_cols(conf_s, m, 1), tn::slice_cols(conf_t, m, 1));
    if (cfg.use_modal_km1)
      br.modal_km1[modalities[m]] =
          add_term(modality_loss(rows(f.h[m], source_rows), rows(f.h[m], target_rows), phi, cfg.modality,
                                 &br.phi_floored),
                   "L_" + name + "^(k-1)");
    br.modal_k[modalities[m]] =
        add_term(modality_loss(rows(f.attended[m], source_rows), rows(f.attended[m], target_rows), phi, cfg.modality,
                               &br.phi_floored),
                 "L_" + name + "^(k)");
  }

  const Var e0 = dirichlet_energy(tn::normalize_rows(f.h_ori), laplacian);
  const Var ekm1 = dirichlet_energy(tn::normalize_rows(f.h_mid), laplacian);
  const Var ek = dirichlet_energy(tn::normalize_rows(f.h_fus), laplacian);
  br.e_0 = e0.scalar();
  br.e_km1 = ekm1.scalar();
  br.e_k = ek.scalar();
  br.constraint = energy::constraint_monitor(br.e_k, br.e_km1, br.e_0, cfg.constraint);
  if (cfg.energy_penalty) {
    const Var below = tn::relu(tn::sub(tn::scale(ekm1, cfg.constraint.c_min), ek));
    const Var above = tn::relu(tn::sub(ek, tn::scale(e0, cfg.constraint.c_max)));
    br.penalty = add_term(tn::scale(tn::add(below, above), cfg.penalty_coef), "energy penalty");
  }

  Var total = parts[0];
  for (std::size_t k = 1; k < parts.size(); ++k) total = tn::add(total, parts[k]);
  br.total = total.scalar();
  check_finite(br.total, "total");
  out.total = total;
  return out;
}

}  // namespace desalign::training
