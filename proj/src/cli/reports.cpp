#include "desalign/cli/reports.hpp"

#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "desalign/mmkg/mmkg.hpp"
#include "json.hpp"

namespace desalign::cli {

RunSummary summarize(const ExperimentConfig& cfg, const std::string& dataset, const eval::MetricsReport& metrics,
                     std::size_t n_p) {
  RunSummary run;
  run.dataset = dataset;
  run.config_hash = config_hash(cfg);
  run.metrics = metrics;
  run.n_p = n_p;
  run.r_seed = cfg.r_seed;
  run.r_img = cfg.r_img;
  run.r_tex = cfg.r_tex;
  run.seed = cfg.seed;
  return run;
}

void write_metrics_json(const RunSummary& run, std::ostream& out) {
  nlohmann::ordered_json j;
  j["dataset"] = run.dataset;
  j["config_hash"] = run.config_hash;
  j["seed"] = run.seed;
  j["n_p"] = run.n_p;
  j["r_seed"] = run.r_seed;
  j["r_img"] = run.r_img;
  j["r_tex"] = run.r_tex;
  j["hits_at_1"] = run.metrics.hits_at(1);
  j["hits_at_10"] = run.metrics.hits_at(10);
  j["mrr"] = run.metrics.mrr;
  nlohmann::ordered_json hits = nlohmann::ordered_json::object();
  for (const auto& [k, v] : run.metrics.hits) hits[std::to_string(k)] = v;
  j["hits"] = hits;
  j["evaluated"] = run.metrics.evaluated;
  j["tie_policy"] = run.metrics.tie_policy;
  out << j.dump(2) << '\n';
}

std::string metrics_csv_header() { return "dataset,config_hash,seed,n_p,r_seed,r_img,r_tex,h1,h10,mrr,evaluated"; }

std::string metrics_csv_row(const RunSummary& run) {
  std::ostringstream row;
  const auto f = mmkg::format_double;
  row << run.dataset << ',' << run.config_hash << ',' << run.seed << ',' << run.n_p << ',' << f(run.r_seed) << ','
      << f(run.r_img) << ',' << f(run.r_tex) << ',' << f(run.metrics.hits_at(1)) << ',' << f(run.metrics.hits_at(10))
      << ',' << f(run.metrics.mrr) << ',' << run.metrics.evaluated;
  return row.str();
}

void write_metrics_csv(const std::vector<RunSummary>& runs, std::ostream& out) {
  out << metrics_csv_header() << '\n';
  for (const RunSummary& run : runs) out << metrics_csv_row(run) << '\n';
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("failed while writing " + path);
}

}  // namespace desalign::cli
