#pragma once

#include <map>
#include <vector>

#include "desalign/encoder/params.hpp"
#include "desalign/tensor/sparse.hpp"

namespace desalign::encoder {

using tensor::SparseMatrix;

/// Inputs shared by every forward pass over one (union) graph.
struct EncoderInputs {
  /// Self-loop normalized adjacency; only its sparsity pattern drives the
  /// graph attention. Must outlive every tape that uses it.
  const SparseMatrix* pattern = nullptr;
  /// n × d_m feature table per non-structure modality.
  std::map<Modality, DenseMatrix> features;
};

/// Everything one forward pass records, in the modality order of the config.
struct ForwardResult {
  std::vector<Var> h;          ///< h^m, n × d
  std::vector<Var> post_ln1;   ///< residual + layer norm after the attention block
  std::vector<Var> attended;   ///< ĥ^ATT_m, n × d
  /// beta[head][m] is n × |M|: how modality m attends to each modality j.
  std::vector<std::vector<Var>> beta;
  Var confidence;  ///< w̃, n × |M|
  Var h_ori;       ///< Σ-concat of w̃^m·h^m
  Var h_mid;       ///< Σ-concat of w̃^m·post_ln1_m
  Var h_fus;       ///< Σ-concat of w̃^m·ĥ^ATT_m
};

/// Two graph-attention layers over the pattern of `pattern`, each averaging
/// `gat_heads` heads with ReLU between layers, then scaled by the diagonal
/// W_g. Head score on edge (i, j) is leaky_relu(a_src·H_i + a_dst·H_j).
Var embed_structure(const SparseMatrix& pattern, const ParamVars& p, const EncoderConfig& cfg);

/// x·W + b with W stored d_m × d.
Var embed_modality(Var x, Var w, Var b);

struct AttentionOutput {
  std::vector<Var> post_ln1;
  std::vector<Var> attended;
  std::vector<std::vector<Var>> beta;
};

/// Multi-head attention of each entity's modality vectors over that same
/// entity's modality vectors, then residual + layer norm, a ReLU FFN, and a
/// second residual + layer norm.
AttentionOutput cross_modal_attention(const std::vector<Var>& h, const ParamVars& p, const EncoderConfig& cfg);

/// softmax over m of (Σ_heads Σ_j β_jm) / √(|M|·N_h), per entity.
Var modal_confidence(const std::vector<std::vector<Var>>& beta);

/// Concatenation over m of w̃^m-scaled blocks.
Var fuse(const std::vector<Var>& blocks, Var confidence);

ForwardResult forward(const EncoderInputs& inputs, const ParamVars& p, const EncoderConfig& cfg);

/// h^Ori with no gradient bookkeeping.
DenseMatrix joint_embedding(const EncoderInputs& inputs, const EncoderParams& params);

}  // namespace desalign::encoder
