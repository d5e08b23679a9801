#pragma once

#include <string>
#include <vector>

#include "desalign/cli/config.hpp"
#include "desalign/encoder/params.hpp"
#include "desalign/eval/metrics.hpp"
#include "desalign/mmkg/mmkg.hpp"
#include "desalign/training/trainer.hpp"

namespace desalign::cli {

/// Both graphs after masking and imputation, with the split in use.
struct Dataset {
  std::string id;
  mmkg::MMKG source;
  mmkg::MMKG target;
  mmkg::SeedAlignments seeds;
  std::vector<std::string> warnings;

  bool operator==(const Dataset&) const = default;
};

/// Unmasked pair: generated from the synthetic spec or loaded from
/// dataset.dir (re-split when dataset.resplit is set).
Dataset raw_dataset(const ExperimentConfig& cfg);

/// raw_dataset followed by the r_img / r_tex masks and imputation of every
/// absent row. Masks use seeds derived from cfg.seed, independent per graph.
Dataset prepare_dataset(const ExperimentConfig& cfg);

/// Writes `<dir>/source/…`, `<dir>/target/…` and `<dir>/alignments.txt` in
/// the mmkg text formats.
void write_dataset(const Dataset& data, const std::string& dir);

/// Reads a directory written by write_dataset.
Dataset read_dataset(const std::string& dir);

training::TrainConfig effective_train_config(const ExperimentConfig& cfg);
encoder::EncoderConfig effective_encoder_config(const ExperimentConfig& cfg);

training::TrainResult run_training(const ExperimentConfig& cfg, const Dataset& data,
                                   const training::UnionGraph& graph);

/// Scores the test pairs of `data`. With n_p > 0 and propagation enabled,
/// h^Ori of each graph is propagated n_p steps with E_c clamped and Ω is
/// the similarity averaged over the snapshots; otherwise Ω is the cosine
/// similarity of h^Ori.
eval::MetricsReport run_evaluation(const ExperimentConfig& cfg, const Dataset& data,
                                   const training::UnionGraph& graph, const encoder::EncoderParams& params,
                                   std::size_t n_p);

/// Snapshots X^(0..n_p) of one graph's h^Ori rows.
std::vector<tensor::DenseMatrix> propagated_snapshots(const ExperimentConfig& cfg, const mmkg::MMKG& g,
                                                      const mmkg::GraphOperators& ops,
                                                      const tensor::DenseMatrix& h, std::size_t n_p);

// ---- commands ---------------------------------------------------------------
// Each writes into cfg.out (created when missing), starting with config.txt.

void cmd_synth(const ExperimentConfig& cfg);
/// checkpoint.txt and history.csv.
void cmd_train(const ExperimentConfig& cfg);
/// metrics.json and metrics.csv from `checkpoint` (default
/// <out>/checkpoint.txt).
void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint = "");
/// sweep_<axis>.csv with one row per value. Axis: r_seed, r_img, r_tex, n_p.
void cmd_sweep(const ExperimentConfig& cfg, const std::string& axis, const std::vector<double>& values);
/// energy_report.csv: per graph and propagation step, the Dirichlet energy
/// of h^Ori and the interpolation bounds against X^(0); then the layer
/// bounds of the attention output projection.
void cmd_energy_report(const ExperimentConfig& cfg, const std::string& checkpoint = "");

}  // namespace desalign::cli
