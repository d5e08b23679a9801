#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "desalign/tensor/dense.hpp"

namespace desalign::eval {

using tensor::DenseMatrix;

/// (row of Ω, column of Ω) for each gold alignment.
using GoldPairs = std::vector<std::pair<std::size_t, std::size_t>>;

inline constexpr const char* kTiePolicy = "index-ascending";

/// Cosine similarity of every source row against every target row. Zero-norm
/// rows score 0 against everything.
DenseMatrix similarity_matrix(const DenseMatrix& xs, const DenseMatrix& xt);

/// Rank of the gold column in each row:
/// 1 + #{j : Ω_ij > Ω_ig} + #{j < g : Ω_ij = Ω_ig}.
std::vector<std::size_t> gold_ranks(const DenseMatrix& omega, const GoldPairs& gold);

double hits_at_k(const DenseMatrix& omega, const GoldPairs& gold, std::size_t k);
double mrr(const DenseMatrix& omega, const GoldPairs& gold);

struct MetricsReport {
  std::map<std::size_t, double> hits;  ///< k -> H@k
  double mrr = 0.0;
  std::size_t evaluated = 0;
  std::string tie_policy = kTiePolicy;

  double hits_at(std::size_t k) const;
};

/// Ranks once and derives every requested H@k plus MRR.
MetricsReport evaluate(const DenseMatrix& omega, const GoldPairs& gold, const std::vector<std::size_t>& ks = {1, 10});

}  // namespace desalign::eval
