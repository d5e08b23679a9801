#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "desalign/mmkg/mmkg.hpp"
#include "desalign/tensor/autodiff.hpp"
#include "desalign/tensor/dense.hpp"

namespace desalign::encoder {

using mmkg::Modality;
using tensor::DenseMatrix;
using tensor::Tape;
using tensor::Var;

struct EncoderConfig {
  std::size_t d = 300;  ///< per-modality embedding width
  std::size_t attention_heads = 1;
  std::size_t gat_layers = 2;
  std::size_t gat_heads = 2;
  double gat_slope = 0.2;
  /// FFN inner width; 0 means 4·d.
  std::size_t ffn_dim = 0;
  double ln_eps = 1e-5;
  /// Modalities in embedding order. Structure, when present, comes first.
  std::vector<Modality> modalities{Modality::g, Modality::r, Modality::t, Modality::v};

  std::size_t head_dim() const { return d / attention_heads; }
  std::size_t ffn_width() const { return ffn_dim == 0 ? 4 * d : ffn_dim; }
  std::size_t modality_index(Modality m) const;
  bool uses(Modality m) const;
  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

template <class T>
struct GatHead {
  T a_src;  ///< d × 1
  T a_dst;  ///< d × 1
};

/// Every trainable tensor of the encoder. Instantiated with DenseMatrix for
/// storage and with Var for a forward pass recorded on a tape.
template <class T>
struct ParamSet {
  T x_g;  ///< n × d initial structure embeddings
  T w_g;  ///< 1 × d diagonal of the structure transform
  std::vector<GatHead<T>> gat;  ///< layer-major, gat_layers · gat_heads entries
  std::map<Modality, T> fc_w;   ///< d_m × d
  std::map<Modality, T> fc_b;   ///< 1 × d
  std::vector<T> w_q;           ///< one d × d_h block per head
  std::vector<T> w_k;
  std::vector<T> w_v;
  T w_o;  ///< d × d
  T ln1_gamma, ln1_beta;
  T ffn_w1, ffn_b1;  ///< d × d_in, 1 × d_in
  T ffn_w2, ffn_b2;  ///< d_in × d, 1 × d
  T ln2_gamma, ln2_beta;
};

/// Calls f(name, tensor) for every tensor in a fixed order. Structure and
/// per-modality entries are skipped when the container is empty.
template <class P, class F>
void visit(P& p, F&& f) {
  if (!p.gat.empty()) {
    f("x_g", p.x_g);
    f("w_g", p.w_g);
    for (std::size_t i = 0; i < p.gat.size(); ++i) {
      f("gat." + std::to_string(i) + ".a_src", p.gat[i].a_src);
      f("gat." + std::to_string(i) + ".a_dst", p.gat[i].a_dst);
    }
  }
  for (auto& [m, w] : p.fc_w) f("fc." + std::string(mmkg::modality_name(m)) + ".w", w);
  for (auto& [m, b] : p.fc_b) f("fc." + std::string(mmkg::modality_name(m)) + ".b", b);
  for (std::size_t h = 0; h < p.w_q.size(); ++h) {
    f("attn." + std::to_string(h) + ".w_q", p.w_q[h]);
    f("attn." + std::to_string(h) + ".w_k", p.w_k[h]);
    f("attn." + std::to_string(h) + ".w_v", p.w_v[h]);
  }
  f("attn.w_o", p.w_o);
  f("ln1.gamma", p.ln1_gamma);
  f("ln1.beta", p.ln1_beta);
  f("ffn.w1", p.ffn_w1);
  f("ffn.b1", p.ffn_b1);
  f("ffn.w2", p.ffn_w2);
  f("ffn.b2", p.ffn_b2);
  f("ln2.gamma", p.ln2_gamma);
  f("ln2.beta", p.ln2_beta);
}

struct EncoderParams : ParamSet<DenseMatrix> {
  EncoderConfig config;
  std::size_t entities = 0;
  std::map<Modality, std::size_t> input_dims;

  bool operator==(const EncoderParams& other) const;
};

using ParamVars = ParamSet<Var>;

/// Glorot-uniform weights, zero biases, unit layer-norm scales and W_g = 1.
/// Rows of x_g are uniform in ±√(3/d), giving unit expected norm.
EncoderParams init_params(const EncoderConfig& config, std::size_t entities,
                          const std::map<Modality, std::size_t>& input_dims, std::uint64_t seed);

/// Pointers to every tensor, in visit order.
std::vector<DenseMatrix*> tensors(EncoderParams& params);
std::vector<std::string> tensor_names(EncoderParams& params);

/// Records every tensor on `tape`: as parameters when `trainable`, else as
/// constants (a forward pass with no backward bookkeeping).
ParamVars bind(Tape& tape, const EncoderParams& params, bool trainable = true);

/// Pointers to the bound Vars, in visit order (matches `tensors`).
std::vector<Var*> vars(ParamVars& vars);

}  // namespace desalign::encoder
