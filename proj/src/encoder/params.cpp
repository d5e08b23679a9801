#include <algorithm>
#include <cmath>
#include <random>

#include "desalign/encoder/params.hpp"
#include "desalign/errors.hpp"

namespace desalign::encoder {

std::size_t EncoderConfig::modality_index(Modality m) const {
  auto it = std::find(modalities.begin(), modalities.end(), m);
  if (it == modalities.end())
    throw ConfigError("modality " + std::string(mmkg::modality_name(m)) + " is not part of the encoder");
  return static_cast<std::size_t>(it - modalities.begin());
}

bool EncoderConfig::uses(Modality m) const {
  return std::find(modalities.begin(), modalities.end(), m) != modalities.end();
}

void EncoderConfig::validate() const {
  if (d == 0) throw ConfigError("encoder d must be positive");
  if (attention_heads == 0 || d % attention_heads != 0)
    throw ConfigError("encoder d = " + std::to_string(d) + " is not divisible by " +
                      std::to_string(attention_heads) + " attention heads");
  if (modalities.empty()) throw ConfigError("encoder needs at least one modality");
  for (std::size_t i = 0; i < modalities.size(); ++i)
    for (std::size_t j = i + 1; j < modalities.size(); ++j)
      if (modalities[i] == modalities[j])
        throw ConfigError("modality " + std::string(mmkg::modality_name(modalities[i])) + " listed twice");
  if (uses(Modality::g) && (gat_layers == 0 || gat_heads == 0))
    throw ConfigError("structure encoder needs at least one GAT layer and head");
  if (!(ln_eps > 0.0)) throw ConfigError("layer-norm epsilon must be positive");
}

bool EncoderParams::operator==(const EncoderParams& other) const {
  if (config != other.config || entities != other.entities || input_dims != other.input_dims) return false;
  std::vector<const DenseMatrix*> a;
  std::vector<const DenseMatrix*> b;
  visit(static_cast<const ParamSet<DenseMatrix>&>(*this), [&](const std::string&, const DenseMatrix& m) { a.push_back(&m); });
  visit(static_cast<const ParamSet<DenseMatrix>&>(other), [&](const std::string&, const DenseMatrix& m) { b.push_back(&m); });
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(*a[i] == *b[i])) return false;
  return true;
}

EncoderParams init_params(const EncoderConfig& config, std::size_t entities,
                          const std::map<Modality, std::size_t>& input_dims, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.d;
  const std::size_t dh = config.head_dim();
  const std::size_t din = config.ffn_width();
  std::mt19937_64 rng(seed);

  auto uniform = [&](std::size_t rows, std::size_t cols, double limit) {
    std::uniform_real_distribution<double> u(-limit, limit);
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = u(rng);
    return m;
  };
  auto glorot = [&](std::size_t rows, std::size_t cols) {
    return uniform(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)));
  };

  EncoderParams p;
  p.config = config;
  p.entities = entities;
  if (config.uses(Modality::g)) {
    if (entities == 0) throw ConfigError("structure embeddings need at least one entity");
    p.x_g = uniform(entities, d, std::sqrt(3.0 / static_cast<double>(d)));
    p.w_g = DenseMatrix(1, d, 1.0);
    for (std::size_t i = 0; i < config.gat_layers * config.gat_heads; ++i)
      p.gat.push_back({glorot(d, 1), glorot(d, 1)});
  }
  for (Modality m : config.modalities) {
    if (m == Modality::g) continue;
    auto it = input_dims.find(m);
    if (it == input_dims.end() || it->second == 0)
      throw ConfigError("no input width for modality " + std::string(mmkg::modality_name(m)));
    p.input_dims[m] = it->second;
    p.fc_w[m] = glorot(it->second, d);
    p.fc_b[m] = DenseMatrix(1, d);
  }
  for (std::size_t h = 0; h < config.attention_heads; ++h) {
    p.w_q.push_back(glorot(d, dh));
    p.w_k.push_back(glorot(d, dh));
    p.w_v.push_back(glorot(d, dh));
  }
  p.w_o = glorot(d, d);
  p.ln1_gamma = DenseMatrix(1, d, 1.0);
  p.ln1_beta = DenseMatrix(1, d);
  p.ffn_w1 = glorot(d, din);
  p.ffn_b1 = DenseMatrix(1, din);
  p.ffn_w2 = glorot(din, d);
  p.ffn_b2 = DenseMatrix(1, d);
  p.ln2_gamma = DenseMatrix(1, d, 1.0);
  p.ln2_beta = DenseMatrix(1, d);
  return p;
}

std::vector<DenseMatrix*> tensors(EncoderParams& params) {
  std::vector<DenseMatrix*> out;
  visit(static_cast<ParamSet<DenseMatrix>&>(params), [&](const std::string&, DenseMatrix& m) { out.push_back(&m); });
  return out;
}

std::vector<std::string> tensor_names(EncoderParams& params) {
  std::vector<std::string> out;
  visit(static_cast<ParamSet<DenseMatrix>&>(params), [&](const std::string& name, DenseMatrix&) { out.push_back(name); });
  return out;
}

ParamVars bind(Tape& tape, const EncoderParams& params, bool trainable) {
  ParamVars v;
  v.gat.resize(params.gat.size());
  for (const auto& [m, w] : params.fc_w) v.fc_w[m];
  for (const auto& [m, b] : params.fc_b) v.fc_b[m];
  v.w_q.resize(params.w_q.size());
  v.w_k.resize(params.w_k.size());
  v.w_v.resize(params.w_v.size());

  std::vector<const DenseMatrix*> src;
  visit(static_cast<const ParamSet<DenseMatrix>&>(params),
        [&](const std::string&, const DenseMatrix& m) { src.push_back(&m); });
  std::size_t k = 0;
  visit(v, [&](const std::string&, Var& var) {
    var = trainable ? tape.parameter(*src[k]) : tape.constant(*src[k]);
    ++k;
  });
  return v;
}

std::vector<Var*> vars(ParamVars& v) {
  std::vector<Var*> out;
  visit(v, [&](const std::string&, Var& var) { out.push_back(&var); });
  return out;
}

}  // namespace desalign::encoder
