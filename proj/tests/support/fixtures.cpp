#include "fixtures.hpp"

namespace fixtures {

DenseMatrix random_dense(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  DenseMatrix m(rows, cols);
  for (double& v : m.data()) v = u(rng);
  return m;
}

oracle::Matrix to_oracle(const DenseMatrix& m) {
  oracle::Matrix out = oracle::zeros(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

DenseMatrix from_oracle(const oracle::Matrix& m) {
  const std::size_t rows = m.size();
  const std::size_t cols = rows == 0 ? 0 : m[0].size();
  DenseMatrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = m[i][j];
  return out;
}

SparseMatrix adjacency(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<desalign::tensor::Triplet> t;
  for (auto [u, v] : edges) {
    t.push_back({u, v, 1.0});
    t.push_back({v, u, 1.0});
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

SparseMatrix oracle_laplacian(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                              bool self_loops) {
  oracle::Matrix a = oracle::normalized_adjacency(n, edges, self_loops);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i][j] = (i == j ? 1.0 : 0.0) - a[i][j];
  return SparseMatrix::from_dense(from_oracle(a));
}

}  // namespace fixtures
