#pragma once

#include <cstddef>
#include <random>
#include <utility>
#include <vector>

#include "desalign/tensor/dense.hpp"
#include "desalign/tensor/sparse.hpp"
#include "oracles.hpp"

namespace fixtures {

using desalign::tensor::DenseMatrix;
using desalign::tensor::SparseMatrix;

DenseMatrix random_dense(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

oracle::Matrix to_oracle(const DenseMatrix& m);
DenseMatrix from_oracle(const oracle::Matrix& m);

/// Undirected unweighted adjacency (no self-loops) from an edge list.
SparseMatrix adjacency(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

/// I − Ã as a sparse matrix, built from the oracle's dense normalization.
SparseMatrix oracle_laplacian(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                              bool self_loops);

}  // namespace fixtures
