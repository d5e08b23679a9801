#include "desalign/propagation/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "desalign/errors.hpp"
#include "desalign/eval/metrics.hpp"
#include "desalign/mmkg/mmkg.hpp"
#include "desalign/tensor/linalg.hpp"

namespace desalign::propagation {

namespace {

void reset_known(DenseMatrix& x, const DenseMatrix& boundary, const std::vector<bool>& known) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (!known[i]) continue;
    auto src = boundary.row(i);
    std::copy(src.begin(), src.end(), x.row(i).begin());
  }
}

// Free rows grouped into connected components of the operator restricted
// to free rows; returns false if some group never touches a fixed row.
bool every_free_group_has_boundary(const SparseMatrix& op, const std::vector<bool>& free_rows) {
  const std::size_t n = op.rows();
  const auto rp = op.row_ptr();
  const auto ci = op.col_idx();
  const auto vals = op.values();
  std::vector<bool> visited(n, false);
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (!free_rows[s] || visited[s]) continue;
    bool anchored = false;
    visited[s] = true;
    stack.assign(1, s);
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t k = rp[u]; k < rp[u + 1]; ++k) {
        const std::size_t v = ci[k];
        if (v == u || vals[k] == 0.0) continue;
        if (!free_rows[v]) {
          anchored = true;
        } else if (!visited[v]) {
          visited[v] = true;
          stack.push_back(v);
        }
      }
    }
    if (!anchored) return false;
  }
  return true;
}

}  // namespace

PropagationState make_state(const DenseMatrix& x0, std::vector<bool> known) {
  if (known.size() != x0.rows())
    throw StructuralError("propagation mask has " + std::to_string(known.size()) + " entries for " +
                          std::to_string(x0.rows()) + " rows");
  PropagationState s;
  s.x = x0;
  s.boundary = x0;
  s.known = std::move(known);
  return s;
}

void advance(PropagationState& state, const SparseMatrix& normalized, double step) {
  if (normalized.rows() != state.x.rows() || !normalized.square())
    throw StructuralError("propagation operator is " + std::to_string(normalized.rows()) + "x" +
                          std::to_string(normalized.cols()) + " for " + std::to_string(state.x.rows()) + " rows");
  DenseMatrix next = normalized.multiply(state.x);
  if (step != 1.0) next = (1.0 - step) * state.x + step * next;
  reset_known(next, state.boundary, state.known);
  state.x = std::move(next);
  ++state.iteration;
  state.snapshots.push_back(state.x);
}

PropagationState propagation_step(const PropagationState& state, const SparseMatrix& normalized, double step) {
  PropagationState next = state;
  advance(next, normalized, step);
  return next;
}

std::vector<DenseMatrix> propagate(const DenseMatrix& x0, const SparseMatrix& normalized,
                                   const std::vector<bool>& known, std::size_t n_p, double tol, double step) {
  if (n_p == 0) throw ConfigError("propagate needs n_p >= 1");
  if (!(step > 0.0)) throw ConfigError("propagation step size must be positive");
  PropagationState state = make_state(x0, known);
  state.snapshots.reserve(n_p);
  for (std::size_t j = 0; j < n_p; ++j) {
    const DenseMatrix before = state.x;
    advance(state, normalized, step);
    if (!state.x.all_finite())
      throw NumericalError("propagation produced non-finite values at iteration " + std::to_string(j + 1));
    if (tol > 0.0 && tensor::max_abs_diff(before, state.x) < tol) break;
  }
  return std::move(state.snapshots);
}

DenseMatrix closed_form_interpolation(const DenseMatrix& x, const SparseMatrix& laplacian,
                                      const std::vector<bool>& free_rows) {
  if (!laplacian.square() || laplacian.rows() != x.rows() || free_rows.size() != x.rows())
    throw StructuralError("closed_form_interpolation: Laplacian, mask and features disagree in size");
  std::vector<std::size_t> f;
  std::vector<std::size_t> b;
  for (std::size_t i = 0; i < x.rows(); ++i) (free_rows[i] ? f : b).push_back(i);
  DenseMatrix out = x;
  if (f.empty()) return out;
  if (!every_free_group_has_boundary(laplacian, free_rows))
    throw NumericalError(
        "closed_form_interpolation: a connected group of missing rows has no known neighbour, so the "
        "sub-Laplacian is singular; give every component a known row");

  const DenseMatrix l_ff = laplacian.block(f, f);
  DenseMatrix rhs(f.size(), x.cols());
  if (!b.empty()) rhs = -1.0 * tensor::matmul(laplacian.block(f, b), tensor::select_rows(x, b));
  DenseMatrix solved;
  try {
    solved = tensor::solve_spd(l_ff, rhs);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("closed_form_interpolation: ") + e.what() +
                         "; use the self-loop operator or add known rows");
  }
  for (std::size_t k = 0; k < f.size(); ++k) {
    auto src = solved.row(k);
    std::copy(src.begin(), src.end(), out.row(f[k]).begin());
  }
  return out;
}

DenseMatrix averaged_similarity(const std::vector<DenseMatrix>& source, const std::vector<DenseMatrix>& target) {
  if (source.size() != target.size())
    throw StructuralError("averaged_similarity: " + std::to_string(source.size()) + " source snapshots vs " +
                          std::to_string(target.size()) + " target snapshots");
  if (source.empty()) throw StructuralError("averaged_similarity: no snapshots");
  DenseMatrix sum = eval::similarity_matrix(source[0], target[0]);
  for (std::size_t j = 1; j < source.size(); ++j) sum = sum + eval::similarity_matrix(source[j], target[j]);
  if (source.size() == 1) return sum;
  return (1.0 / static_cast<double>(source.size())) * sum;
}

void dump_snapshots(const std::vector<DenseMatrix>& snapshots, const std::vector<bool>& known,
                    const std::string& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  for (std::size_t j = 0; j < snapshots.size(); ++j) {
    const std::string base = (std::filesystem::path(dir) / (prefix + "_" + std::to_string(j))).string();
    mmkg::write_features(mmkg::FeatureTable{snapshots[j], known}, base + ".txt", base + ".mask");
  }
}

}  // namespace desalign::propagation
