#include "desalign/cli/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "desalign/cli/reports.hpp"
#include "desalign/encoder/checkpoint.hpp"
#include "desalign/encoder/encoder.hpp"
#include "desalign/energy/energy.hpp"
#include "desalign/errors.hpp"
#include "desalign/propagation/propagation.hpp"

namespace desalign::cli {

namespace fs = std::filesystem;
using mmkg::MMKG;
using tensor::DenseMatrix;

namespace {

const char* side_name(int side) { return side == 0 ? "source" : "target"; }

std::string synthetic_id(const ExperimentConfig& cfg) {
  const mmkg::SyntheticSpec& s = cfg.dataset.synthetic;
  return "synthetic-n" + std::to_string(s.n) + "-noise" + mmkg::format_double(s.noise) + "-seed" +
         std::to_string(cfg.seed);
}

std::string dataset_id(const std::string& dir) {
  fs::path p = fs::path(dir).lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

void resplit(mmkg::SeedAlignments& seeds, double ratio, std::uint64_t seed) {
  std::vector<mmkg::AlignmentPair> all = seeds.train;
  all.insert(all.end(), seeds.test.begin(), seeds.test.end());
  std::sort(all.begin(), all.end());
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  const std::size_t n_train = std::min(mmkg::ceil_count(ratio * static_cast<double>(all.size())), all.size());
  seeds.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  seeds.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
}

void prepare_out(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + cfg.out + ": " + ec.message());
  write_text_file((fs::path(cfg.out) / "config.txt").string(), config_echo(cfg));
}

std::string checkpoint_path(const ExperimentConfig& cfg, const std::string& explicit_path) {
  std::string path = explicit_path.empty() ? (fs::path(cfg.out) / "checkpoint.txt").string() : explicit_path;
  if (!fs::exists(path)) throw ConfigError("checkpoint " + path + " not found; run `train` first or pass --checkpoint");
  return path;
}

encoder::EncoderParams load_matching_checkpoint(const ExperimentConfig& cfg, const std::string& path,
                                                const training::UnionGraph& graph) {
  encoder::EncoderParams params = encoder::load_checkpoint(path);
  if (!(params.config == effective_encoder_config(cfg)))
    throw ConfigError("checkpoint " + path + " was trained with a different encoder configuration");
  if (params.entities != graph.size())
    throw ConfigError("checkpoint " + path + " covers " + std::to_string(params.entities) + " entities, the dataset has " +
                      std::to_string(graph.size()));
  for (Modality m : params.config.modalities) {
    if (m == Modality::g) continue;
    auto have = graph.input_dims();
    if (!have.count(m) || have.at(m) != params.input_dims.at(m))
      throw ConfigError("checkpoint " + path + " expects a different width for modality " +
                        std::string(mmkg::modality_name(m)));
  }
  return params;
}

void report_warnings(const Dataset& data) {
  for (const std::string& w : data.warnings) std::cerr << "warning: " << w << '\n';
}

std::vector<DenseMatrix> test_rows(const std::vector<DenseMatrix>& snaps, const std::vector<std::size_t>& rows) {
  std::vector<DenseMatrix> out;
  out.reserve(snaps.size());
  for (const DenseMatrix& s : snaps) out.push_back(tensor::select_rows(s, rows));
  return out;
}

DenseMatrix row_block(const DenseMatrix& h, std::size_t first, std::size_t count) {
  std::vector<std::size_t> rows(count);
  for (std::size_t i = 0; i < count; ++i) rows[i] = first + i;
  return tensor::select_rows(h, rows);
}

std::size_t effective_np(const ExperimentConfig& cfg, std::size_t n_p) {
  return cfg.ablation.no_propagation ? 0 : n_p;
}

RunSummary train_and_evaluate(const ExperimentConfig& cfg) {
  Dataset data = prepare_dataset(cfg);
  report_warnings(data);
  training::UnionGraph graph = training::build_union(data.source, data.target, cfg.self_loops);
  training::TrainResult result = run_training(cfg, data, graph);
  const std::size_t n_p = effective_np(cfg, cfg.n_p);
  return summarize(cfg, data.id, run_evaluation(cfg, data, graph, result.params, n_p), n_p);
}

}  // namespace

Dataset raw_dataset(const ExperimentConfig& cfg) {
  Dataset data;
  if (cfg.dataset.dir.empty()) {
    mmkg::SyntheticSpec spec = cfg.dataset.synthetic;
    spec.seed = cfg.seed;
    spec.overlap = cfg.r_seed;
    mmkg::SyntheticPair pair = mmkg::generate_synthetic(spec);
    data.id = synthetic_id(cfg);
    data.source = std::move(pair.source);
    data.target = std::move(pair.target);
    data.seeds = std::move(pair.seeds);
  } else {
    data = read_dataset(cfg.dataset.dir);
    if (cfg.dataset.resplit) resplit(data.seeds, cfg.r_seed, derive_seed(cfg.seed, "split"));
  }
  return data;
}

Dataset prepare_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  Dataset data = raw_dataset(cfg);
  for (int side = 0; side < 2; ++side) {
    MMKG& g = side == 0 ? data.source : data.target;
    const std::string tag = side_name(side);
    mmkg::ImputationReport report;
    g = mmkg::impute_initial(g, derive_seed(cfg.seed, "impute-" + tag), &report);
    for (const std::string& w : report.warnings) data.warnings.push_back(tag + ": " + w);
    if (cfg.r_img < 1.0 && g.has(Modality::v))
      g = mmkg::apply_modality_mask(g, Modality::v, cfg.r_img, derive_seed(cfg.seed, "mask-v-" + tag));
    if (cfg.r_tex < 1.0 && g.has(Modality::t))
      g = mmkg::apply_modality_mask(g, Modality::t, cfg.r_tex, derive_seed(cfg.seed, "mask-t-" + tag));
  }
  return data;
}

void write_dataset(const Dataset& data, const std::string& dir) {
  std::error_code ec;
  for (int side = 0; side < 2; ++side) {
    const fs::path base = fs::path(dir) / side_name(side);
    fs::create_directories(base, ec);
    if (ec) throw std::runtime_error("cannot create " + base.string() + ": " + ec.message());
    const MMKG& g = side == 0 ? data.source : data.target;
    write_text_file((base / "entities.txt").string(), std::to_string(g.n) + "\n");
    mmkg::write_triples(g, (base / "triples.txt").string());
    for (const auto& [m, table] : g.features) {
      const std::string name(mmkg::modality_name(m));
      mmkg::write_features(table, (base / (name + ".txt")).string(), (base / (name + ".mask")).string());
    }
    if (!g.attr_counts.empty()) mmkg::write_attr_counts(g.attr_counts, (base / "attr_counts.txt").string());
  }
  mmkg::write_alignments(data.seeds, (fs::path(dir) / "alignments.txt").string());
}

Dataset read_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("dataset directory " + dir + " not found");
  Dataset data;
  data.id = dataset_id(dir);
  for (int side = 0; side < 2; ++side) {
    const fs::path base = fs::path(dir) / side_name(side);
    mmkg::MMKGPaths paths;
    paths.triples = (base / "triples.txt").string();
    const fs::path count_file = base / "entities.txt";
    if (fs::exists(count_file)) {
      std::ifstream in(count_file);
      if (!(in >> paths.entity_count)) throw IngestionError(count_file.string(), 1, "expected an entity count");
    }
    for (Modality m : mmkg::kTableModalities) {
      const std::string name(mmkg::modality_name(m));
      if (fs::exists(base / (name + ".txt"))) paths.features[m] = (base / (name + ".txt")).string();
      if (fs::exists(base / (name + ".mask"))) paths.masks[m] = (base / (name + ".mask")).string();
    }
    if (fs::exists(base / "attr_counts.txt")) paths.attr_counts = (base / "attr_counts.txt").string();
    (side == 0 ? data.source : data.target) = mmkg::load_mmkg(paths);
  }
  data.seeds = mmkg::load_alignments((fs::path(dir) / "alignments.txt").string());
  data.seeds.validate(data.source.n, data.target.n);
  return data;
}

training::TrainConfig effective_train_config(const ExperimentConfig& cfg) {
  training::TrainConfig t = cfg.train;
  t.seed = derive_seed(cfg.seed, "train");
  t.loss.use_task_0 = !cfg.ablation.no_task0;
  t.loss.use_modal_km1 = !cfg.ablation.no_modal_km1;
  return t;
}

encoder::EncoderConfig effective_encoder_config(const ExperimentConfig& cfg) {
  encoder::EncoderConfig e = cfg.encoder;
  e.modalities = cfg.active_modalities();
  return e;
}

training::TrainResult run_training(const ExperimentConfig& cfg, const Dataset& data,
                                   const training::UnionGraph& graph) {
  encoder::EncoderParams init = encoder::init_params(effective_encoder_config(cfg), graph.size(), graph.input_dims(),
                                                     derive_seed(cfg.seed, "init"));
  return training::train(graph, data.seeds.train, std::move(init), effective_train_config(cfg));
}

std::vector<DenseMatrix> propagated_snapshots(const ExperimentConfig& cfg, const MMKG& g,
                                              const mmkg::GraphOperators& ops, const DenseMatrix& h,
                                              std::size_t n_p) {
  std::vector<DenseMatrix> snaps{h};
  if (n_p == 0) return snaps;
  const std::vector<bool> known =
      mmkg::partition_entities(g, cfg.consistency_percentile).consistent_mask(g.n);
  for (DenseMatrix& x : propagation::propagate(h, ops.normalized, known, n_p, 0.0, cfg.propagation_step))
    snaps.push_back(std::move(x));
  return snaps;
}

eval::MetricsReport run_evaluation(const ExperimentConfig& cfg, const Dataset& data,
                                   const training::UnionGraph& graph, const encoder::EncoderParams& params,
                                   std::size_t n_p) {
  n_p = effective_np(cfg, n_p);
  const DenseMatrix h = encoder::joint_embedding(graph.inputs(), params);
  const DenseMatrix hs = row_block(h, 0, graph.source_n);
  const DenseMatrix ht = row_block(h, graph.source_n, graph.target_n);

  std::vector<std::size_t> src_rows, tgt_rows;
  eval::GoldPairs gold;
  for (std::size_t i = 0; i < data.seeds.test.size(); ++i) {
    src_rows.push_back(data.seeds.test[i].source);
    tgt_rows.push_back(data.seeds.test[i].target);
    gold.emplace_back(i, i);
  }
  const DenseMatrix omega = propagation::averaged_similarity(
      test_rows(propagated_snapshots(cfg, data.source, graph.source_ops, hs, n_p), src_rows),
      test_rows(propagated_snapshots(cfg, data.target, graph.target_ops, ht, n_p), tgt_rows));
  return eval::evaluate(omega, gold);
}

// ---- commands ---------------------------------------------------------------

void cmd_synth(const ExperimentConfig& cfg) {
  Dataset data = prepare_dataset(cfg);
  report_warnings(data);
  prepare_out(cfg);
  write_dataset(data, cfg.out);
}

void cmd_train(const ExperimentConfig& cfg) {
  Dataset data = prepare_dataset(cfg);
  report_warnings(data);
  prepare_out(cfg);
  training::UnionGraph graph = training::build_union(data.source, data.target, cfg.self_loops);
  training::TrainResult result = run_training(cfg, data, graph);
  encoder::save_checkpoint(result.params, (fs::path(cfg.out) / "checkpoint.txt").string());
  std::ostringstream history;
  training::write_history_csv(result.history, result.params.config.modalities, history);
  write_text_file((fs::path(cfg.out) / "history.csv").string(), history.str());
}

void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint) {
  const std::string path = checkpoint_path(cfg, checkpoint);
  Dataset data = prepare_dataset(cfg);
  report_warnings(data);
  training::UnionGraph graph = training::build_union(data.source, data.target, cfg.self_loops);
  encoder::EncoderParams params = load_matching_checkpoint(cfg, path, graph);
  const std::size_t n_p = effective_np(cfg, cfg.n_p);
  RunSummary run = summarize(cfg, data.id, run_evaluation(cfg, data, graph, params, n_p), n_p);

  prepare_out(cfg);
  std::ostringstream json, csv;
  write_metrics_json(run, json);
  write_metrics_csv({run}, csv);
  write_text_file((fs::path(cfg.out) / "metrics.json").string(), json.str());
  write_text_file((fs::path(cfg.out) / "metrics.csv").string(), csv.str());
}

void cmd_sweep(const ExperimentConfig& cfg, const std::string& axis, const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (axis != "r_seed" && axis != "r_img" && axis != "r_tex" && axis != "n_p")
    throw ConfigError("unknown sweep axis '" + axis + "' (expected r_seed, r_img, r_tex or n_p)");
  std::vector<ExperimentConfig> cells;
  for (double v : values) {
    ExperimentConfig cell = cfg;
    if (axis == "n_p") {
      if (!(v >= 0.0) || v != std::floor(v)) throw ConfigError("n_p values must be non-negative integers");
      cell.n_p = static_cast<std::size_t>(v);
    } else {
      apply_setting(cell, axis, mmkg::format_double(v));
    }
    cell.validate();
    cells.push_back(std::move(cell));
  }
  prepare_out(cfg);

  std::vector<RunSummary> runs;
  if (axis == "n_p") {
    // the propagation depth does not enter training, so one model serves
    // every cell
    Dataset data = prepare_dataset(cfg);
    report_warnings(data);
    training::UnionGraph graph = training::build_union(data.source, data.target, cfg.self_loops);
    training::TrainResult result = run_training(cfg, data, graph);
    for (const ExperimentConfig& cell : cells) {
      const std::size_t n_p = effective_np(cell, cell.n_p);
      runs.push_back(summarize(cell, data.id, run_evaluation(cell, data, graph, result.params, n_p), n_p));
    }
  } else {
    for (const ExperimentConfig& cell : cells) runs.push_back(train_and_evaluate(cell));
  }

  std::ostringstream csv;
  csv << "axis,value," << metrics_csv_header() << '\n';
  for (std::size_t i = 0; i < runs.size(); ++i)
    csv << axis << ',' << mmkg::format_double(values[i]) << ',' << metrics_csv_row(runs[i]) << '\n';
  write_text_file((fs::path(cfg.out) / ("sweep_" + axis + ".csv")).string(), csv.str());
}

void cmd_energy_report(const ExperimentConfig& cfg, const std::string& checkpoint) {
  const std::string path = checkpoint_path(cfg, checkpoint);
  Dataset data = prepare_dataset(cfg);
  report_warnings(data);
  training::UnionGraph graph = training::build_union(data.source, data.target, cfg.self_loops);
  encoder::EncoderParams params = load_matching_checkpoint(cfg, path, graph);

  tensor::Tape tape;
  encoder::ParamVars vars = encoder::bind(tape, params, false);
  encoder::ForwardResult f = encoder::forward(graph.inputs(), vars, params.config);
  const DenseMatrix h = f.h_ori.value();

  const auto fmt = mmkg::format_double;
  std::ostringstream csv;
  csv << "kind,scope,index,energy,reference,gap,distance,lower,upper,violated\n";
  const std::size_t n_p = effective_np(cfg, cfg.n_p);
  for (int side = 0; side < 2; ++side) {
    const MMKG& g = side == 0 ? data.source : data.target;
    const mmkg::GraphOperators& ops = side == 0 ? graph.source_ops : graph.target_ops;
    const DenseMatrix block = side == 0 ? row_block(h, 0, graph.source_n) : row_block(h, graph.source_n, graph.target_n);
    const std::vector<DenseMatrix> snaps = propagated_snapshots(cfg, g, ops, block, n_p);
    for (std::size_t j = 0; j < snaps.size(); ++j) {
      energy::EnergyReport r = energy::interpolation_bounds(snaps[0], snaps[j], ops.laplacian);
      csv << "propagation," << side_name(side) << ',' << j << ',' << fmt(r.energy) << ',' << fmt(r.reference_energy)
          << ',' << fmt(r.gap) << ',' << fmt(r.distance) << ',' << fmt(r.lower) << ','
          << (r.upper ? fmt(*r.upper) : "") << ',' << (r.violated ? 1 : 0) << '\n';
    }
  }
  for (std::size_t k = 0; k < params.config.modalities.size(); ++k) {
    energy::EnergyReport r = energy::layer_energy_bounds(f.h[k].value(), params.w_o, graph.laplacian);
    csv << "layer," << mmkg::modality_name(params.config.modalities[k]) << ",0," << fmt(r.energy) << ','
        << fmt(r.reference_energy) << ",,," << fmt(r.lower) << ',' << fmt(*r.upper) << ',' << (r.violated ? 1 : 0)
        << '\n';
  }
  const double e0 = energy::dirichlet_energy(tensor::l2_normalize_rows(h), graph.laplacian);
  const double ekm1 = energy::dirichlet_energy(tensor::l2_normalize_rows(f.h_mid.value()), graph.laplacian);
  const double ek = energy::dirichlet_energy(tensor::l2_normalize_rows(f.h_fus.value()), graph.laplacian);
  energy::ConstraintStatus s = energy::constraint_monitor(ek, ekm1, e0, cfg.train.loss.constraint);
  csv << "constraint,union,0," << fmt(ek) << ',' << fmt(e0) << ",,," << fmt(s.lower) << ',' << fmt(s.upper) << ','
      << (s.satisfied ? 0 : 1) << '\n';

  prepare_out(cfg);
  write_text_file((fs::path(cfg.out) / "energy_report.csv").string(), csv.str());
}

}  // namespace desalign::cli
