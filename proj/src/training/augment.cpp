#include "desalign/training/augment.hpp"

namespace desalign::training {

std::vector<std::pair<std::size_t, std::size_t>> mutual_nearest(const tensor::DenseMatrix& omega,
                                                                std::optional<double> floor) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (omega.rows() == 0 || omega.cols() == 0) return out;
  std::vector<std::size_t> best_col(omega.rows(), 0);
  std::vector<std::size_t> best_row(omega.cols(), 0);
  for (std::size_t i = 0; i < omega.rows(); ++i)
    for (std::size_t j = 0; j < omega.cols(); ++j) {
      if (omega(i, j) > omega(i, best_col[i])) best_col[i] = j;
      if (omega(i, j) > omega(best_row[j], j)) best_row[j] = i;
    }
  for (std::size_t i = 0; i < omega.rows(); ++i) {
    const std::size_t j = best_col[i];
    if (best_row[j] != i) continue;
    if (floor && omega(i, j) < *floor) continue;
    out.emplace_back(i, j);
  }
  return out;
}

}  // namespace desalign::training
