#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "desalign/tensor/dense.hpp"

namespace desalign::training {

/// Pairs (i, j) where j is the best column of row i and i the best row of
/// column j. Ties go to the smaller index. With `floor`, pairs scoring below
/// it are dropped. The result is a one-to-one partial matching, sorted by i.
std::vector<std::pair<std::size_t, std::size_t>> mutual_nearest(const tensor::DenseMatrix& omega,
                                                                std::optional<double> floor = std::nullopt);

}  // namespace desalign::training
