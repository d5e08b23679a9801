#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "desalign/cli/config.hpp"
#include "desalign/eval/metrics.hpp"

namespace desalign::cli {

struct RunSummary {
  std::string dataset;
  std::string config_hash;
  eval::MetricsReport metrics;
  std::size_t n_p = 0;
  double r_seed = 0.0;
  double r_img = 1.0;
  double r_tex = 1.0;
  std::uint64_t seed = 0;
};

RunSummary summarize(const ExperimentConfig& cfg, const std::string& dataset, const eval::MetricsReport& metrics,
                     std::size_t n_p);

/// Pretty-printed JSON object with a trailing newline.
void write_metrics_json(const RunSummary& run, std::ostream& out);

/// Column header shared by metrics.csv and sweep files.
std::string metrics_csv_header();
std::string metrics_csv_row(const RunSummary& run);
void write_metrics_csv(const std::vector<RunSummary>& runs, std::ostream& out);

/// Writes `text` to `path`, throwing std::runtime_error when it cannot.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace desalign::cli
