#include <algorithm>
#include <cmath>
#include <map>

#include "desalign/errors.hpp"
#include "desalign/mmkg/mmkg.hpp"

namespace desalign::mmkg {

SparseMatrix structural_adjacency(const MMKG& g) {
  std::vector<tensor::Triplet> entries;
  entries.reserve(2 * g.triples.size());
  for (const Triple& t : g.triples) {
    if (t.head >= g.n || t.tail >= g.n) throw StructuralError("triple references an entity out of range");
    if (t.head == t.tail) continue;
    entries.push_back({t.head, t.tail, 1.0});
    entries.push_back({t.tail, t.head, 1.0});
  }
  SparseMatrix summed = SparseMatrix::from_triplets(g.n, g.n, std::move(entries));
  // parallel triples collapse to a single unit edge
  std::vector<tensor::Triplet> unit;
  unit.reserve(summed.nnz());
  const auto rp = summed.row_ptr();
  const auto ci = summed.col_idx();
  for (std::size_t r = 0; r < g.n; ++r)
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) unit.push_back({r, ci[k], 1.0});
  return SparseMatrix::from_triplets(g.n, g.n, std::move(unit));
}

GraphOperators build_operators(const SparseMatrix& adjacency, bool self_loops) {
  if (!adjacency.square()) throw StructuralError("build_operators: adjacency must be square");
  if (!adjacency.is_symmetric()) throw StructuralError("build_operators: adjacency must be symmetric");
  const std::size_t n = adjacency.rows();

  GraphOperators ops;
  ops.self_loops = self_loops;
  if (self_loops) {
    std::vector<tensor::Triplet> entries;
    const auto rp = adjacency.row_ptr();
    const auto ci = adjacency.col_idx();
    const auto vals = adjacency.values();
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) entries.push_back({r, ci[k], vals[k]});
      entries.push_back({r, r, 1.0});
    }
    ops.adjacency = SparseMatrix::from_triplets(n, n, std::move(entries));
  } else {
    ops.adjacency = adjacency;
  }

  ops.degree.assign(n, 0.0);
  const auto rp = ops.adjacency.row_ptr();
  const auto ci = ops.adjacency.col_idx();
  const auto vals = ops.adjacency.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) ops.degree[r] += vals[k];

  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(std::max(ops.degree[i], 1.0));

  std::vector<tensor::Triplet> norm;
  std::vector<tensor::Triplet> lap;
  norm.reserve(ops.adjacency.nnz());
  lap.reserve(ops.adjacency.nnz() + n);
  for (std::size_t r = 0; r < n; ++r) {
    lap.push_back({r, r, 1.0});
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
      const double v = vals[k] * inv_sqrt[r] * inv_sqrt[ci[k]];
      norm.push_back({r, ci[k], v});
      lap.push_back({r, ci[k], -v});
    }
  }
  ops.normalized = SparseMatrix::from_triplets(n, n, std::move(norm));
  ops.laplacian = SparseMatrix::from_triplets(n, n, std::move(lap));
  return ops;
}

GraphOperators build_operators(const MMKG& g, bool self_loops) {
  return build_operators(structural_adjacency(g), self_loops);
}

DenseMatrix relation_bag_of_words(const MMKG& g, std::size_t vocab) {
  std::map<std::size_t, std::size_t> freq;
  for (const Triple& t : g.triples) ++freq[t.relation];
  std::vector<std::pair<std::size_t, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > vocab) ranked.resize(vocab);
  std::map<std::size_t, std::size_t> column;
  for (std::size_t c = 0; c < ranked.size(); ++c) column[ranked[c].first] = c;

  DenseMatrix bow(g.n, vocab);
  for (const Triple& t : g.triples) {
    auto it = column.find(t.relation);
    if (it == column.end()) continue;
    bow(t.head, it->second) += 1.0;
    bow(t.tail, it->second) += 1.0;
  }
  return tensor::l2_normalize_rows(bow);
}

}  // namespace desalign::mmkg
