#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "desalign/cli/config.hpp"
#include "desalign/cli/pipeline.hpp"
#include "desalign/errors.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericalExit = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> n_p;
  std::vector<std::string> ablate;
  std::vector<std::string> set;
  std::string checkpoint;
  std::string axis;
  std::vector<double> values;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config, "key=value experiment config file");
  cmd->add_option("--seed", opt.seed, "master seed");
  cmd->add_option("--out", opt.out, "output directory");
  cmd->add_option("--np", opt.n_p, "propagation steps at evaluation");
  cmd->add_option("--ablate", opt.ablate, "drop-g|drop-r|drop-t|drop-v|no-prop|no-task0|no-modal-km1")
      ->delimiter(',');
  cmd->add_option("--set", opt.set, "extra key=value setting, applied after the config file");
}

desalign::cli::ExperimentConfig build_config(const Options& opt) {
  using namespace desalign::cli;
  ExperimentConfig cfg = opt.config.empty() ? default_config() : load_config(opt.config);
  for (const std::string& kv : opt.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw desalign::ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.out) cfg.out = *opt.out;
  if (opt.n_p) cfg.n_p = *opt.n_p;
  for (const std::string& token : opt.ablate) apply_ablations(cfg, token);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal entity alignment experiments"};
  app.require_subcommand(1);
  Options opt;

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset directory");
  CLI::App* train = app.add_subcommand("train", "train and write checkpoint.txt and history.csv");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint and write metrics.json and metrics.csv");
  CLI::App* sweep = app.add_subcommand("sweep", "train and evaluate once per value of one axis");
  CLI::App* energy = app.add_subcommand("energy-report", "energy and bound diagnostics for a checkpoint");
  for (CLI::App* cmd : {synth, train, eval, sweep, energy}) add_common(cmd, opt);
  for (CLI::App* cmd : {eval, energy})
    cmd->add_option("--checkpoint", opt.checkpoint, "checkpoint file (default <out>/checkpoint.txt)");
  sweep->add_option("--axis", opt.axis, "r_seed, r_img, r_tex or n_p")->required();
  sweep->add_option("--values", opt.values, "comma-separated values")->delimiter(',')->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    const desalign::cli::ExperimentConfig cfg = build_config(opt);
    if (synth->parsed()) desalign::cli::cmd_synth(cfg);
    if (train->parsed()) desalign::cli::cmd_train(cfg);
    if (eval->parsed()) desalign::cli::cmd_eval(cfg, opt.checkpoint);
    if (sweep->parsed()) desalign::cli::cmd_sweep(cfg, opt.axis, opt.values);
    if (energy->parsed()) desalign::cli::cmd_energy_report(cfg, opt.checkpoint);
  } catch (const desalign::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const desalign::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
