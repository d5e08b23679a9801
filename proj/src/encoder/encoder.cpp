#include "desalign/encoder/encoder.hpp"

#include <cmath>
#include <string>

#include "desalign/errors.hpp"

namespace desalign::encoder {

namespace tn = tensor;

Var embed_structure(const SparseMatrix& pattern, const ParamVars& p, const EncoderConfig& cfg) {
  if (pattern.rows() != p.x_g.rows() || !pattern.square())
    throw StructuralError("embed_structure: graph has " + std::to_string(pattern.rows()) + " nodes, x_g has " +
                          std::to_string(p.x_g.rows()) + " rows");
  Var h = p.x_g;
  for (std::size_t layer = 0; layer < cfg.gat_layers; ++layer) {
    Var acc;
    for (std::size_t head = 0; head < cfg.gat_heads; ++head) {
      const GatHead<Var>& g = p.gat[layer * cfg.gat_heads + head];
      Var scores = tn::edge_scores(tn::matmul(h, g.a_src), tn::matmul(h, g.a_dst), pattern);
      Var alpha = tn::edge_softmax(tn::leaky_relu(scores, cfg.gat_slope), pattern);
      Var out = tn::edge_aggregate(alpha, h, pattern);
      acc = acc.valid() ? tn::add(acc, out) : out;
    }
    h = cfg.gat_heads == 1 ? acc : tn::scale(acc, 1.0 / static_cast<double>(cfg.gat_heads));
    if (layer + 1 < cfg.gat_layers) h = tn::relu(h);
  }
  return tn::mul_row(h, p.w_g);
}

Var embed_modality(Var x, Var w, Var b) {
  if (x.cols() != w.rows())
    throw StructuralError("embed_modality: features have " + std::to_string(x.cols()) + " columns, W has " +
                          std::to_string(w.rows()) + " rows");
  return tn::add_row(tn::matmul(x, w), b);
}

AttentionOutput cross_modal_attention(const std::vector<Var>& h, const ParamVars& p, const EncoderConfig& cfg) {
  const std::size_t nm = h.size();
  if (nm == 0) throw StructuralError("cross_modal_attention: no modality embeddings");
  const std::size_t n = h[0].rows();
  for (const Var& v : h)
    if (v.rows() != n || v.cols() != cfg.d)
      throw StructuralError("cross_modal_attention: modality embeddings must all be " + std::to_string(n) + "x" +
                            std::to_string(cfg.d));
  const double temperature = std::sqrt(static_cast<double>(cfg.head_dim()));

  AttentionOutput out;
  const Var stacked = tn::concat_rows(h);
  std::vector<std::vector<Var>> head_out(nm);
  for (std::size_t head = 0; head < cfg.attention_heads; ++head) {
    const Var q = tn::matmul(stacked, p.w_q[head]);
    const Var k = tn::matmul(stacked, p.w_k[head]);
    const Var v = tn::matmul(stacked, p.w_v[head]);
    std::vector<Var> qs, ks, vs;
    for (std::size_t m = 0; m < nm; ++m) {
      qs.push_back(tn::slice_rows(q, m * n, n));
      ks.push_back(tn::slice_rows(k, m * n, n));
      vs.push_back(tn::slice_rows(v, m * n, n));
    }
    std::vector<Var> betas;
    for (std::size_t m = 0; m < nm; ++m) {
      std::vector<Var> logits;
      for (std::size_t j = 0; j < nm; ++j) logits.push_back(tn::row_sum(tn::hadamard(qs[m], ks[j])));
      const Var beta = tn::softmax_rows(tn::scale(tn::concat_cols(logits), 1.0 / temperature));
      Var mixed;
      for (std::size_t j = 0; j < nm; ++j) {
        const Var term = tn::mul_col(vs[j], tn::slice_cols(beta, j, 1));
        mixed = mixed.valid() ? tn::add(mixed, term) : term;
      }
      head_out[m].push_back(mixed);
      betas.push_back(beta);
    }
    out.beta.push_back(std::move(betas));
  }

  std::vector<Var> per_modality;
  for (std::size_t m = 0; m < nm; ++m) per_modality.push_back(tn::concat_cols(head_out[m]));
  const Var projected = tn::matmul(tn::concat_rows(per_modality), p.w_o);
  const Var z = tn::add_row(
      tn::mul_row(tn::layer_norm_rows(tn::add(stacked, projected), cfg.ln_eps), p.ln1_gamma), p.ln1_beta);
  const Var inner = tn::relu(tn::add_row(tn::matmul(z, p.ffn_w1), p.ffn_b1));
  const Var ffn = tn::add_row(tn::matmul(inner, p.ffn_w2), p.ffn_b2);
  const Var y =
      tn::add_row(tn::mul_row(tn::layer_norm_rows(tn::add(z, ffn), cfg.ln_eps), p.ln2_gamma), p.ln2_beta);
  for (std::size_t m = 0; m < nm; ++m) {
    out.post_ln1.push_back(tn::slice_rows(z, m * n, n));
    out.attended.push_back(tn::slice_rows(y, m * n, n));
  }
  return out;
}

Var modal_confidence(const std::vector<std::vector<Var>>& beta) {
  if (beta.empty() || beta[0].empty()) throw StructuralError("modal_confidence: no attention weights");
  const std::size_t heads = beta.size();
  const std::size_t nm = beta[0].size();
  std::vector<Var> received;
  for (std::size_t m = 0; m < nm; ++m) {
    Var acc;
    for (std::size_t i = 0; i < heads; ++i)
      for (std::size_t j = 0; j < nm; ++j) {
        const Var col = tn::slice_cols(beta[i][j], m, 1);
        acc = acc.valid() ? tn::add(acc, col) : col;
      }
    received.push_back(acc);
  }
  const double norm = std::sqrt(static_cast<double>(nm * heads));
  return tn::softmax_rows(tn::scale(tn::concat_cols(received), 1.0 / norm));
}

Var fuse(const std::vector<Var>& blocks, Var confidence) {
  if (blocks.size() != confidence.cols())
    throw StructuralError("fuse: " + std::to_string(blocks.size()) + " blocks but " +
                          std::to_string(confidence.cols()) + " confidence columns");
  std::vector<Var> scaled;
  for (std::size_t m = 0; m < blocks.size(); ++m)
    scaled.push_back(tn::mul_col(blocks[m], tn::slice_cols(confidence, m, 1)));
  return tn::concat_cols(scaled);
}

ForwardResult forward(const EncoderInputs& inputs, const ParamVars& p, const EncoderConfig& cfg) {
  Tape& tape = *p.w_o.tape();
  ForwardResult r;
  for (Modality m : cfg.modalities) {
    if (m == Modality::g) {
      if (inputs.pattern == nullptr) throw StructuralError("forward: structure modality needs a graph");
      r.h.push_back(embed_structure(*inputs.pattern, p, cfg));
      continue;
    }
    auto it = inputs.features.find(m);
    if (it == inputs.features.end())
      throw StructuralError("forward: no feature table for modality " + std::string(mmkg::modality_name(m)));
    r.h.push_back(embed_modality(tape.constant(it->second), p.fc_w.at(m), p.fc_b.at(m)));
  }
  for (const Var& v : r.h)
    if (v.rows() != r.h[0].rows()) throw StructuralError("forward: modality inputs disagree on entity count");

  AttentionOutput att = cross_modal_attention(r.h, p, cfg);
  r.post_ln1 = std::move(att.post_ln1);
  r.attended = std::move(att.attended);
  r.beta = std::move(att.beta);
  r.confidence = modal_confidence(r.beta);
  r.h_ori = fuse(r.h, r.confidence);
  r.h_mid = fuse(r.post_ln1, r.confidence);
  r.h_fus = fuse(r.attended, r.confidence);
  return r;
}

DenseMatrix joint_embedding(const EncoderInputs& inputs, const EncoderParams& params) {
  Tape tape;
  ParamVars p = bind(tape, params, false);
  return forward(inputs, p, params.config).h_ori.value();
}

}  // namespace desalign::encoder
