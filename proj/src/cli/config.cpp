#include "desalign/cli/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "desalign/errors.hpp"

namespace desalign::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError(std::string(key) + ": expected " + expected + ", got '" + std::string(value) + "'");
}

double to_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a number");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a non-negative integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find_first_of(", ", start);
    if (end == std::string_view::npos) end = s.size();
    if (end > start) out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

std::vector<Modality> to_modalities(std::string_view key, std::string_view value) {
  std::vector<Modality> out;
  for (std::string_view token : split_list(value)) {
    try {
      out.push_back(mmkg::parse_modality(token));
    } catch (const StructuralError&) {
      bad_value(key, value, "a list of modalities from g, r, t, v");
    }
  }
  if (out.empty()) bad_value(key, value, "at least one modality");
  return out;
}

std::string modality_list(const std::vector<Modality>& ms) {
  std::string out;
  for (Modality m : ms) {
    if (!out.empty()) out += ',';
    out += mmkg::modality_name(m);
  }
  return out;
}

std::string num(double v) { return mmkg::format_double(v); }
std::string num(std::uint64_t v) { return std::to_string(v); }
std::string flag(bool v) { return v ? "true" : "false"; }

std::string ablation_tokens(const Ablation& a) {
  std::string out;
  auto add = [&](std::string_view t) {
    if (!out.empty()) out += ',';
    out += t;
  };
  for (Modality m : mmkg::kAllModalities)
    if (a.dropped.count(m)) add("drop-" + std::string(mmkg::modality_name(m)));
  if (a.no_propagation) add("no-prop");
  if (a.no_task0) add("no-task0");
  if (a.no_modal_km1) add("no-modal-km1");
  return out;
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// `access` is a generic lambda returning a reference to one member.
template <class Access>
Field real(const char* key, Access access) {
  return {key, [access](ExperimentConfig& c, std::string_view k, std::string_view v) { access(c) = to_double(k, v); },
          [access](const ExperimentConfig& c) { return num(access(c)); }};
}

template <class Access>
Field count(const char* key, Access access) {
  return {key,
          [access](ExperimentConfig& c, std::string_view k, std::string_view v) {
            access(c) = static_cast<std::remove_reference_t<decltype(access(c))>>(to_u64(k, v));
          },
          [access](const ExperimentConfig& c) {
            return num(static_cast<std::uint64_t>(access(c)));
          }};
}

template <class Access>
Field boolean(const char* key, Access access) {
  return {key, [access](ExperimentConfig& c, std::string_view k, std::string_view v) { access(c) = to_bool(k, v); },
          [access](const ExperimentConfig& c) { return flag(access(c)); }};
}

template <class Access>
Field modalities(const char* key, Access access) {
  return {key,
          [access](ExperimentConfig& c, std::string_view k, std::string_view v) { access(c) = to_modalities(k, v); },
          [access](const ExperimentConfig& c) { return modality_list(access(c)); }};
}

Field synth_dim(const char* key, Modality m) {
  return {key,
          [m](ExperimentConfig& c, std::string_view k, std::string_view v) {
            c.dataset.synthetic.dims[m] = static_cast<std::size_t>(to_u64(k, v));
          },
          [m](const ExperimentConfig& c) {
            auto it = c.dataset.synthetic.dims.find(m);
            return it == c.dataset.synthetic.dims.end() ? std::string("0") : std::to_string(it->second);
          }};
}

#define DESALIGN_FIELD(kind, key, member) kind(key, [](auto& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"dataset.dir", [](ExperimentConfig& c, std::string_view, std::string_view v) { c.dataset.dir = v; },
       [](const ExperimentConfig& c) { return c.dataset.dir; }},
      DESALIGN_FIELD(boolean, "dataset.resplit", dataset.resplit),
      DESALIGN_FIELD(count, "synth.n", dataset.synthetic.n),
      DESALIGN_FIELD(modalities, "synth.modalities", dataset.synthetic.modalities),
      synth_dim("synth.dims.g", Modality::g),
      synth_dim("synth.dims.r", Modality::r),
      synth_dim("synth.dims.t", Modality::t),
      synth_dim("synth.dims.v", Modality::v),
      DESALIGN_FIELD(real, "synth.noise", dataset.synthetic.noise),
      DESALIGN_FIELD(real, "synth.avg_degree", dataset.synthetic.avg_degree),
      DESALIGN_FIELD(count, "synth.relations", dataset.synthetic.relations),
      DESALIGN_FIELD(count, "synth.clusters", dataset.synthetic.clusters),
      DESALIGN_FIELD(real, "synth.specificity", dataset.synthetic.specificity),
      DESALIGN_FIELD(count, "synth.modality_rank", dataset.synthetic.modality_rank),
      DESALIGN_FIELD(real, "synth.avg_attributes", dataset.synthetic.avg_attributes),
      DESALIGN_FIELD(real, "r_seed", r_seed),
      DESALIGN_FIELD(real, "r_img", r_img),
      DESALIGN_FIELD(real, "r_tex", r_tex),
      DESALIGN_FIELD(count, "encoder.d", encoder.d),
      DESALIGN_FIELD(count, "encoder.attention_heads", encoder.attention_heads),
      DESALIGN_FIELD(count, "encoder.gat_layers", encoder.gat_layers),
      DESALIGN_FIELD(count, "encoder.gat_heads", encoder.gat_heads),
      DESALIGN_FIELD(real, "encoder.gat_slope", encoder.gat_slope),
      DESALIGN_FIELD(count, "encoder.ffn_dim", encoder.ffn_dim),
      DESALIGN_FIELD(real, "encoder.ln_eps", encoder.ln_eps),
      DESALIGN_FIELD(modalities, "encoder.modalities", encoder.modalities),
      DESALIGN_FIELD(real, "train.tau", train.loss.modality.tau),
      DESALIGN_FIELD(count, "train.batch_size", train.batch_size),
      DESALIGN_FIELD(count, "train.epochs", train.epochs),
      DESALIGN_FIELD(real, "train.learning_rate", train.learning_rate),
      DESALIGN_FIELD(real, "train.warmup_fraction", train.warmup_fraction),
      DESALIGN_FIELD(real, "train.beta1", train.beta1),
      DESALIGN_FIELD(real, "train.beta2", train.beta2),
      DESALIGN_FIELD(real, "train.adam_eps", train.adam_eps),
      DESALIGN_FIELD(real, "train.weight_decay", train.weight_decay),
      DESALIGN_FIELD(count, "train.grad_accumulation", train.grad_accumulation),
      DESALIGN_FIELD(real, "train.validation_fraction", train.validation_fraction),
      DESALIGN_FIELD(count, "train.patience", train.patience),
      DESALIGN_FIELD(boolean, "train.iterative", train.iterative),
      DESALIGN_FIELD(count, "train.iterative_epochs", train.iterative_epochs),
      {"train.mutual_floor",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (v.empty() || v == "none")
           c.train.mutual_floor.reset();
         else
           c.train.mutual_floor = to_double(k, v);
       },
       [](const ExperimentConfig& c) { return c.train.mutual_floor ? num(*c.train.mutual_floor) : "none"; }},
      DESALIGN_FIELD(real, "train.phi_floor", train.loss.modality.phi_floor),
      DESALIGN_FIELD(boolean, "train.phi_outside", train.loss.modality.phi_outside),
      DESALIGN_FIELD(boolean, "train.energy_penalty", train.loss.energy_penalty),
      DESALIGN_FIELD(real, "train.penalty_coef", train.loss.penalty_coef),
      DESALIGN_FIELD(real, "train.c_min", train.loss.constraint.c_min),
      DESALIGN_FIELD(real, "train.c_max", train.loss.constraint.c_max),
      DESALIGN_FIELD(count, "propagation.n_p", n_p),
      DESALIGN_FIELD(real, "propagation.step", propagation_step),
      DESALIGN_FIELD(real, "propagation.percentile", consistency_percentile),
      DESALIGN_FIELD(boolean, "graph.self_loops", self_loops),
      {"ablate", [](ExperimentConfig& c, std::string_view, std::string_view v) { apply_ablations(c, v); },
       [](const ExperimentConfig& c) { return ablation_tokens(c.ablation); }},
      DESALIGN_FIELD(count, "seed", seed),
  };
  return table;
}

#undef DESALIGN_FIELD

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.encoder.d = 64;
  cfg.train.epochs = 200;
  cfg.train.iterative_epochs = 200;
  return cfg;
}

void ExperimentConfig::validate() const {
  auto ratio = [](const char* key, double v) {
    if (!(v > 0.0 && v <= 1.0)) throw ConfigError(std::string(key) + " must lie in (0, 1], got " + num(v));
  };
  if (!(r_seed > 0.0 && r_seed < 1.0)) throw ConfigError("r_seed must lie in (0, 1), got " + num(r_seed));
  ratio("r_img", r_img);
  ratio("r_tex", r_tex);
  if (!(propagation_step > 0.0)) throw ConfigError("propagation.step must be positive");
  if (!(consistency_percentile >= 0.0 && consistency_percentile <= 1.0))
    throw ConfigError("propagation.percentile must lie in [0, 1]");
  if (active_modalities().empty()) throw ConfigError("every modality is dropped");
  if (dataset.dir.empty()) {
    if (dataset.synthetic.n < 4) throw ConfigError("synth.n must be at least 4");
    if (!(dataset.synthetic.noise >= 0.0)) throw ConfigError("synth.noise must be non-negative");
    for (Modality m : active_modalities())
      if (m != Modality::g && !std::count(dataset.synthetic.modalities.begin(), dataset.synthetic.modalities.end(), m))
        throw ConfigError("encoder modality " + std::string(mmkg::modality_name(m)) +
                          " is not generated by synth.modalities");
  }
  encoder::EncoderConfig enc = encoder;
  enc.modalities = active_modalities();
  enc.validate();
  train.validate();
}

std::vector<Modality> ExperimentConfig::active_modalities() const {
  std::vector<Modality> out;
  for (Modality m : encoder.modalities)
    if (!ablation.dropped.count(m)) out.push_back(m);
  return out;
}

void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "out") {
    cfg.out = value;
    return;
  }
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void parse_config(ExperimentConfig& cfg, std::istream& in, const std::string& label) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(label + ":" + std::to_string(number) + ": expected key=value");
    try {
      apply_setting(cfg, text.substr(0, eq), text.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(label + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  ExperimentConfig cfg = default_config();
  parse_config(cfg, in, path);
  return cfg;
}

void apply_ablations(ExperimentConfig& cfg, std::string_view tokens) {
  for (std::string_view token : split_list(tokens)) {
    if (token.starts_with("drop-") && token.size() == 6) {
      try {
        cfg.ablation.dropped.insert(mmkg::parse_modality(token.substr(5)));
        continue;
      } catch (const StructuralError&) {
      }
    } else if (token == "no-prop") {
      cfg.ablation.no_propagation = true;
      continue;
    } else if (token == "no-task0") {
      cfg.ablation.no_task0 = true;
      continue;
    } else if (token == "no-modal-km1") {
      cfg.ablation.no_modal_km1 = true;
      continue;
    }
    throw ConfigError("unknown ablation '" + std::string(token) +
                      "' (expected drop-g, drop-r, drop-t, drop-v, no-prop, no-task0 or no-modal-km1)");
  }
}

std::string config_echo(const ExperimentConfig& cfg) {
  std::ostringstream out;
  for (const Field& f : fields()) out << f.key << '=' << f.get(cfg) << '\n';
  out << "active_modalities=" << modality_list(cfg.active_modalities()) << '\n';
  return out.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_echo(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  // splitmix64 finalizer over the seed mixed with the purpose bytes
  std::uint64_t z = seed;
  for (unsigned char ch : purpose) z = (z ^ ch) * 0x100000001b3ULL;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace desalign::cli
