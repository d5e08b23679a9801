#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "desalign/encoder/params.hpp"
#include "desalign/eval/metrics.hpp"
#include "desalign/mmkg/mmkg.hpp"
#include "desalign/training/losses.hpp"

namespace desalign::training {

using mmkg::AlignmentPair;

/// Source and target graphs stacked into one block-diagonal graph. Source
/// entity i is row i, target entity j is row source_n + j.
struct UnionGraph {
  std::size_t source_n = 0;
  std::size_t target_n = 0;
  mmkg::GraphOperators source_ops;
  mmkg::GraphOperators target_ops;
  SparseMatrix normalized;
  SparseMatrix laplacian;
  std::map<Modality, DenseMatrix> features;

  std::size_t size() const { return source_n + target_n; }
  std::size_t target_row(std::size_t j) const { return source_n + j; }
  encoder::EncoderInputs inputs() const;
  std::map<Modality, std::size_t> input_dims() const;
};

/// Feature tables are stacked for every modality present in both graphs.
/// Throws StructuralError when a shared modality has different widths.
UnionGraph build_union(const mmkg::MMKG& source, const mmkg::MMKG& target, bool self_loops = true);

struct TrainConfig {
  std::size_t batch_size = 3500;
  std::size_t epochs = 500;
  double learning_rate = 1e-3;
  double warmup_fraction = 0.15;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t grad_accumulation = 1;
  double validation_fraction = 0.1;
  /// Epochs without a validation improvement before stopping; 0 disables.
  std::size_t patience = 0;
  bool iterative = false;
  std::size_t iterative_epochs = 500;
  /// Optional minimum similarity for a mutual nearest pair.
  std::optional<double> mutual_floor;
  LossConfig loss;
  std::uint64_t seed = 1;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

struct HistoryRow {
  std::size_t stage = 1;
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  LossBreakdown loss;  ///< averaged over the epoch's batches
  std::optional<eval::MetricsReport> validation;
};

struct TrainResult {
  encoder::EncoderParams params;
  std::vector<HistoryRow> history;
  std::size_t best_epoch = 0;
  std::size_t best_stage = 1;
  /// Pairs added by the iterative stage, in target-graph indices.
  std::vector<AlignmentPair> augmented;
};

/// Learning rate at optimizer step `step` (0-based) of `total`: linear
/// warm-up over the first warmup_fraction of the steps, cosine decay after.
double scheduled_rate(const TrainConfig& cfg, std::size_t step, std::size_t total);

/// Runs the optimizer over the seed pairs. A validation split of the seeds
/// drives early stopping; the parameters of the best validation epoch are
/// returned, the latest one among ties. With `iterative` set, a second stage
/// retrains on the seeds plus the mutual nearest neighbours among entities
/// outside the seeds.
TrainResult train(const UnionGraph& graph, const std::vector<AlignmentPair>& seeds, encoder::EncoderParams init,
                  const TrainConfig& cfg);

/// Validation split used by `train`: {fit, validation}.
std::pair<std::vector<AlignmentPair>, std::vector<AlignmentPair>> split_validation(
    const std::vector<AlignmentPair>& seeds, double fraction, std::uint64_t seed);

/// H@1/H@10/MRR of h^Ori over `pairs`, with the pairs' targets as candidates.
eval::MetricsReport evaluate_pairs(const UnionGraph& graph, const encoder::EncoderParams& params,
                                   const std::vector<AlignmentPair>& pairs);

/// One CSV row per history entry. Columns: stage, epoch, lr, every loss part,
/// validation metrics (empty when absent), energies and the constraint.
void write_history_csv(const std::vector<HistoryRow>& rows, const std::vector<Modality>& modalities,
                       std::ostream& out);

}  // namespace desalign::training
