#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "desalign/encoder/params.hpp"
#include "desalign/mmkg/mmkg.hpp"
#include "desalign/training/trainer.hpp"

namespace desalign::cli {

using mmkg::Modality;

struct Ablation {
  std::set<Modality> dropped;
  bool no_propagation = false;
  bool no_task0 = false;
  bool no_modal_km1 = false;

  bool operator==(const Ablation&) const = default;
};

struct DatasetSpec {
  /// Directory written by `synth`; empty selects the synthetic generator.
  std::string dir;
  /// For a loaded directory: reshuffle all gold pairs and split them by
  /// r_seed instead of keeping the stored split.
  bool resplit = false;
  mmkg::SyntheticSpec synthetic;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  double r_seed = 0.3;
  /// Fractions of entities that keep their image and text features.
  double r_img = 1.0;
  double r_tex = 1.0;
  encoder::EncoderConfig encoder;
  training::TrainConfig train;
  std::size_t n_p = 2;
  double propagation_step = 1.0;
  double consistency_percentile = 0.25;
  bool self_loops = true;
  Ablation ablation;
  std::string out = "out";
  std::uint64_t seed = 1;

  /// Throws ConfigError for invalid combinations.
  void validate() const;
  /// Encoder modalities minus the dropped ones.
  std::vector<Modality> active_modalities() const;
};

/// Desk-scale defaults: d = 64, 200 epochs.
ExperimentConfig default_config();

/// Sets one documented key. Throws ConfigError for unknown keys or values
/// that do not parse.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// key=value lines; blank lines and lines starting with '#' are skipped.
/// Errors name `label` and the line number.
void parse_config(ExperimentConfig& cfg, std::istream& in, const std::string& label);
ExperimentConfig load_config(const std::string& path);

/// Tokens separated by commas or spaces: drop-g, drop-r, drop-t, drop-v,
/// no-prop, no-task0, no-modal-km1.
void apply_ablations(ExperimentConfig& cfg, std::string_view tokens);

/// Every key with its effective value, one per line, in a fixed order. The
/// output directory is left out so reports do not depend on where they are
/// written.
std::string config_echo(const ExperimentConfig& cfg);

/// 16 hex digits of the FNV-1a hash of the echo.
std::string config_hash(const ExperimentConfig& cfg);

/// Deterministic sub-seed for one consumer of the master seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

}  // namespace desalign::cli
