#include "desalign/eval/metrics.hpp"

#include <cmath>
#include <string>

#include "desalign/errors.hpp"

namespace desalign::eval {

DenseMatrix similarity_matrix(const DenseMatrix& xs, const DenseMatrix& xt) {
  if (xs.cols() != xt.cols())
    throw StructuralError("similarity_matrix: source has " + std::to_string(xs.cols()) + " columns, target has " +
                          std::to_string(xt.cols()));
  return tensor::matmul_nt(tensor::l2_normalize_rows(xs), tensor::l2_normalize_rows(xt));
}

std::vector<std::size_t> gold_ranks(const DenseMatrix& omega, const GoldPairs& gold) {
  std::vector<std::size_t> ranks;
  ranks.reserve(gold.size());
  for (const auto& [i, g] : gold) {
    if (i >= omega.rows() || g >= omega.cols())
      throw StructuralError("gold pair (" + std::to_string(i) + ", " + std::to_string(g) + ") outside a " +
                            std::to_string(omega.rows()) + "x" + std::to_string(omega.cols()) + " similarity matrix");
    auto row = omega.row(i);
    const double target = row[g];
    if (std::isnan(target)) throw NumericalError("similarity of gold pair (" + std::to_string(i) + ", " +
                                                 std::to_string(g) + ") is NaN");
    std::size_t rank = 1;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] > target || (j < g && row[j] == target)) ++rank;
    }
    ranks.push_back(rank);
  }
  return ranks;
}

double hits_at_k(const DenseMatrix& omega, const GoldPairs& gold, std::size_t k) {
  return evaluate(omega, gold, {k}).hits_at(k);
}

double mrr(const DenseMatrix& omega, const GoldPairs& gold) { return evaluate(omega, gold, {1}).mrr; }

double MetricsReport::hits_at(std::size_t k) const {
  auto it = hits.find(k);
  if (it == hits.end()) throw ConfigError("H@" + std::to_string(k) + " was not computed");
  return it->second;
}

MetricsReport evaluate(const DenseMatrix& omega, const GoldPairs& gold, const std::vector<std::size_t>& ks) {
  for (std::size_t k : ks)
    if (k == 0) throw ConfigError("hits@k needs k >= 1");
  MetricsReport report;
  report.evaluated = gold.size();
  const std::vector<std::size_t> ranks = gold_ranks(omega, gold);
  for (std::size_t k : ks) {
    std::size_t hit = 0;
    for (std::size_t r : ranks) hit += r <= k;
    report.hits[k] = ranks.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(ranks.size());
  }
  double reciprocal = 0.0;
  for (std::size_t r : ranks) reciprocal += 1.0 / static_cast<double>(r);
  report.mrr = ranks.empty() ? 0.0 : reciprocal / static_cast<double>(ranks.size());
  return report;
}

}  // namespace desalign::eval
