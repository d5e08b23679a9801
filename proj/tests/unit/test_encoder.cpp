#include <cmath>
#include <random>
#include <sstream>

#include "desalign/encoder/checkpoint.hpp"
#include "desalign/encoder/encoder.hpp"
#include "desalign/errors.hpp"
#include "desalign/mmkg/mmkg.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace desalign;
using namespace desalign::encoder;
using mmkg::Modality;

namespace {

SparseMatrix self_loop_operator(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  return mmkg::build_operators(fixtures::adjacency(n, edges), true).normalized;
}

EncoderConfig small_config(std::size_t d, std::vector<Modality> mods, std::size_t heads = 1) {
  EncoderConfig c;
  c.d = d;
  c.attention_heads = heads;
  c.modalities = std::move(mods);
  return c;
}

using Vec = std::vector<double>;

Vec row_times(const Vec& x, const DenseMatrix& w) {
  Vec out(w.cols(), 0.0);
  for (std::size_t k = 0; k < x.size(); ++k)
    for (std::size_t j = 0; j < w.cols(); ++j) out[j] += x[k] * w(k, j);
  return out;
}

Vec layer_norm(const Vec& x, const DenseMatrix& gamma, const DenseMatrix& beta, double eps) {
  double mu = 0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(x.size());
  double var = 0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(x.size());
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mu) / std::sqrt(var + eps) * gamma(0, i) + beta(0, i);
  return out;
}

// Scalar-loop reference of the attention block for one entity.
struct EntityOracle {
  std::vector<Vec> post_ln1;
  std::vector<Vec> attended;
  std::vector<std::vector<Vec>> beta;  // [head][m][j]
};

EntityOracle attention_oracle(const std::vector<Vec>& h, const EncoderParams& p) {
  const std::size_t nm = h.size();
  const std::size_t heads = p.config.attention_heads;
  const std::size_t dh = p.config.head_dim();
  EntityOracle o;
  std::vector<Vec> concat(nm);
  o.beta.assign(heads, std::vector<Vec>(nm, Vec(nm)));
  for (std::size_t i = 0; i < heads; ++i) {
    std::vector<Vec> q(nm), k(nm), v(nm);
    for (std::size_t m = 0; m < nm; ++m) {
      q[m] = row_times(h[m], p.w_q[i]);
      k[m] = row_times(h[m], p.w_k[i]);
      v[m] = row_times(h[m], p.w_v[i]);
    }
    for (std::size_t m = 0; m < nm; ++m) {
      Vec logits(nm);
      double mx = -1e300;
      for (std::size_t j = 0; j < nm; ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[m][c] * k[j][c];
        logits[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logits[j]);
      }
      double z = 0;
      for (std::size_t j = 0; j < nm; ++j) z += std::exp(logits[j] - mx);
      Vec mixed(dh, 0.0);
      for (std::size_t j = 0; j < nm; ++j) {
        o.beta[i][m][j] = std::exp(logits[j] - mx) / z;
        for (std::size_t c = 0; c < dh; ++c) mixed[c] += o.beta[i][m][j] * v[j][c];
      }
      concat[m].insert(concat[m].end(), mixed.begin(), mixed.end());
    }
  }
  const double eps = p.config.ln_eps;
  for (std::size_t m = 0; m < nm; ++m) {
    Vec proj = row_times(concat[m], p.w_o);
    Vec res(h[m].size());
    for (std::size_t c = 0; c < res.size(); ++c) res[c] = h[m][c] + proj[c];
    Vec z = layer_norm(res, p.ln1_gamma, p.ln1_beta, eps);
    Vec inner = row_times(z, p.ffn_w1);
    for (std::size_t c = 0; c < inner.size(); ++c) inner[c] = std::max(0.0, inner[c] + p.ffn_b1(0, c));
    Vec f = row_times(inner, p.ffn_w2);
    for (std::size_t c = 0; c < f.size(); ++c) f[c] += p.ffn_b2(0, c) + z[c];
    o.post_ln1.push_back(z);
    o.attended.push_back(layer_norm(f, p.ln2_gamma, p.ln2_beta, eps));
  }
  return o;
}

void randomize(EncoderParams& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (DenseMatrix* t : tensors(p))
    for (double& v : t->data()) v = u(rng);
}

}  // namespace

TEST_CASE("config and initialization") {
  EncoderConfig c = small_config(8, {Modality::g, Modality::t});
  EncoderParams p = init_params(c, 5, {{Modality::t, 3}}, 1);
  CHECK(p.x_g.rows() == 5);
  CHECK(p.x_g.cols() == 8);
  CHECK(p.w_g == DenseMatrix(1, 8, 1.0));
  CHECK(p.gat.size() == 4);
  CHECK(p.fc_w.at(Modality::t).rows() == 3);
  CHECK(p.ffn_w1.cols() == 32);
  CHECK(p.ln1_gamma == DenseMatrix(1, 8, 1.0));
  CHECK(p == init_params(c, 5, {{Modality::t, 3}}, 1));
  CHECK_FALSE(p == init_params(c, 5, {{Modality::t, 3}}, 2));
  CHECK(tensors(p).size() == tensor_names(p).size());

  CHECK_THROWS_AS(init_params(small_config(8, {Modality::t}, 3), 5, {{Modality::t, 3}}, 1), ConfigError);
  CHECK_THROWS_AS(init_params(small_config(8, {Modality::t, Modality::t}), 5, {{Modality::t, 3}}, 1), ConfigError);
  CHECK_THROWS_AS(init_params(small_config(8, {Modality::v}), 5, {{Modality::t, 3}}, 1), ConfigError);
}

TEST_CASE("embed_structure") {
  std::mt19937_64 rng(20);
  EncoderConfig c = small_config(4, {Modality::g});

  SUBCASE("single node") {
    EncoderParams p = init_params(c, 1, {}, 3);
    p.w_g = DenseMatrix{{2, -1, 0.5, 3}};
    p.x_g = DenseMatrix{{1, -2, 0.25, -0.5}};
    SparseMatrix a = self_loop_operator(1, {});
    Tape tape;
    Var h = embed_structure(a, bind(tape, p), c);
    CHECK(h.value() == DenseMatrix{{2, 0, 0.125, 0}});
  }
  SUBCASE("disconnected nodes do not interact") {
    EncoderParams p = init_params(c, 2, {}, 4);
    SparseMatrix a = self_loop_operator(2, {});
    Tape t1;
    DenseMatrix before = embed_structure(a, bind(t1, p), c).value();
    p.x_g(1, 0) += 5.0;
    Tape t2;
    DenseMatrix after = embed_structure(a, bind(t2, p), c).value();
    for (std::size_t j = 0; j < 4; ++j) CHECK(after(0, j) == before(0, j));
  }
  SUBCASE("symmetric K3") {
    EncoderParams p = init_params(c, 3, {}, 5);
    for (std::size_t i = 1; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) p.x_g(i, j) = p.x_g(0, j);
    Tape tape;
    DenseMatrix h = embed_structure(self_loop_operator(3, {{0, 1}, {1, 2}, {0, 2}}), bind(tape, p), c).value();
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(h(1, j) == doctest::Approx(h(0, j)).epsilon(1e-14));
      CHECK(h(2, j) == doctest::Approx(h(0, j)).epsilon(1e-14));
    }
  }
  SUBCASE("permutation equivariance") {
    const std::size_t n = 9;
    auto edges = oracle::random_connected_graph(n, 5, rng);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = (i * 4 + 3) % n;
    std::vector<std::pair<std::size_t, std::size_t>> moved;
    for (auto [u, v] : edges) moved.emplace_back(perm[u], perm[v]);
    EncoderParams p = init_params(c, n, {}, 6);
    EncoderParams q = p;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < 4; ++j) q.x_g(perm[i], j) = p.x_g(i, j);
    Tape t1, t2;
    DenseMatrix hp = embed_structure(self_loop_operator(n, edges), bind(t1, p), c).value();
    DenseMatrix hq = embed_structure(self_loop_operator(n, moved), bind(t2, q), c).value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(hq(perm[i], j) == doctest::Approx(hp(i, j)).epsilon(1e-12));
  }
}

TEST_CASE("embed_modality") {
  std::mt19937_64 rng(21);
  Tape tape;
  DenseMatrix x = fixtures::random_dense(4, 3, rng);
  CHECK(embed_modality(tape.constant(x), tape.constant(DenseMatrix::identity(3)), tape.constant(DenseMatrix(1, 3)))
            .value() == x);
  DenseMatrix b{{1, 2}};
  DenseMatrix zero_out =
      embed_modality(tape.constant(DenseMatrix(3, 3)), tape.constant(fixtures::random_dense(3, 2, rng)),
                     tape.constant(b))
          .value();
  for (std::size_t i = 0; i < 3; ++i) CHECK(zero_out(i, 1) == 2.0);

  DenseMatrix w = fixtures::random_dense(3, 5, rng);
  DenseMatrix bias = fixtures::random_dense(1, 5, rng);
  DenseMatrix h = embed_modality(tape.constant(x), tape.constant(w), tape.constant(bias)).value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = bias(0, j);
      for (std::size_t k = 0; k < 3; ++k) acc += x(i, k) * w(k, j);
      CHECK(std::abs(h(i, j) - acc) <= 1e-12);
    }
  CHECK_THROWS_AS(embed_modality(tape.constant(x), tape.constant(DenseMatrix(4, 2)), tape.constant(DenseMatrix(1, 2))),
                  StructuralError);
}

TEST_CASE("cross_modal_attention") {
  std::mt19937_64 rng(22);
  SUBCASE("matches the scalar oracle") {
    for (std::size_t heads : {1u, 2u}) {
      EncoderConfig c = small_config(4, {Modality::r, Modality::t, Modality::v}, heads);
      EncoderParams p = init_params(c, 2, {{Modality::r, 4}, {Modality::t, 4}, {Modality::v, 4}}, 7);
      randomize(p, rng);
      std::vector<DenseMatrix> hs;
      for (int m = 0; m < 3; ++m) hs.push_back(fixtures::random_dense(2, 4, rng));
      Tape tape;
      ParamVars pv = bind(tape, p);
      std::vector<Var> h;
      for (auto& m : hs) h.push_back(tape.constant(m));
      AttentionOutput out = cross_modal_attention(h, pv, c);
      for (std::size_t e = 0; e < 2; ++e) {
        std::vector<Vec> rows;
        for (auto& m : hs) rows.emplace_back(m.row(e).begin(), m.row(e).end());
        EntityOracle o = attention_oracle(rows, p);
        for (std::size_t m = 0; m < 3; ++m) {
          for (std::size_t j = 0; j < 4; ++j) {
            CHECK(std::abs(out.post_ln1[m].value()(e, j) - o.post_ln1[m][j]) <= 1e-10);
            CHECK(std::abs(out.attended[m].value()(e, j) - o.attended[m][j]) <= 1e-10);
          }
          for (std::size_t i = 0; i < heads; ++i) {
            double total = 0;
            for (std::size_t j = 0; j < 3; ++j) {
              CHECK(std::abs(out.beta[i][m].value()(e, j) - o.beta[i][m][j]) <= 1e-10);
              total += out.beta[i][m].value()(e, j);
            }
            CHECK(std::abs(total - 1.0) <= 1e-8);
          }
        }
      }
    }
  }
  SUBCASE("identical modality vectors give uniform weights") {
    EncoderConfig c = small_config(4, {Modality::r, Modality::t, Modality::v, Modality::g});
    EncoderParams p = init_params(c, 3, {{Modality::r, 4}, {Modality::t, 4}, {Modality::v, 4}}, 8);
    DenseMatrix same = fixtures::random_dense(3, 4, rng);
    Tape tape;
    AttentionOutput out = cross_modal_attention(std::vector<Var>(4, tape.constant(same)), bind(tape, p), c);
    for (const Var& b : out.beta[0])
      for (double v : b.value().data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
  }
  SUBCASE("zero query and key weights give uniform weights") {
    EncoderConfig c = small_config(4, {Modality::r, Modality::t});
    EncoderParams p = init_params(c, 5, {{Modality::r, 4}, {Modality::t, 4}}, 9);
    p.w_q[0] = DenseMatrix(4, 4);
    p.w_k[0] = DenseMatrix(4, 4);
    Tape tape;
    std::vector<Var> h{tape.constant(fixtures::random_dense(5, 4, rng)), tape.constant(fixtures::random_dense(5, 4, rng))};
    AttentionOutput out = cross_modal_attention(h, bind(tape, p), c);
    for (const Var& b : out.beta[0])
      for (double v : b.value().data()) CHECK(v == 0.5);
  }
}

TEST_CASE("modal_confidence") {
  Tape tape;
  SUBCASE("uniform attention") {
    std::vector<std::vector<Var>> beta{std::vector<Var>(4, tape.constant(DenseMatrix(2, 4, 0.25)))};
    for (double v : modal_confidence(beta).value().data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("all attention on the first modality") {
    // column sums (4, 0, 0, 0) scaled by 1/√4 give softmax(2, 0, 0, 0)
    DenseMatrix onehot{{1, 0, 0, 0}};
    std::vector<std::vector<Var>> beta{std::vector<Var>(4, tape.constant(onehot))};
    DenseMatrix w = modal_confidence(beta).value();
    const double big = std::exp(2.0) / (std::exp(2.0) + 3.0);
    const double small = 1.0 / (std::exp(2.0) + 3.0);
    CHECK(w(0, 0) == doctest::Approx(big).epsilon(1e-14));
    CHECK(w(0, 0) == doctest::Approx(0.711235).epsilon(1e-6));
    for (std::size_t m = 1; m < 4; ++m) CHECK(w(0, m) == doctest::Approx(small).epsilon(1e-14));
  }
  SUBCASE("more attention received means more confidence") {
    DenseMatrix b0{{0.2, 0.5, 0.3}};
    DenseMatrix b1{{0.1, 0.6, 0.3}};
    DenseMatrix b2{{0.3, 0.4, 0.3}};
    std::vector<std::vector<Var>> beta{{tape.constant(b0), tape.constant(b1), tape.constant(b2)}};
    DenseMatrix w = modal_confidence(beta).value();
    CHECK(w(0, 1) > w(0, 0));
    CHECK(w(0, 1) > w(0, 2));
    CHECK(w(0, 0) + w(0, 1) + w(0, 2) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("fuse") {
  Tape tape;
  std::mt19937_64 rng(23);
  DenseMatrix g = fixtures::random_dense(2, 3, rng);
  std::vector<Var> blocks{tape.constant(g), tape.constant(fixtures::random_dense(2, 3, rng)),
                          tape.constant(fixtures::random_dense(2, 3, rng)),
                          tape.constant(fixtures::random_dense(2, 3, rng))};
  DenseMatrix onehot{{1, 0, 0, 0}, {1, 0, 0, 0}};
  DenseMatrix out = fuse(blocks, tape.constant(onehot)).value();
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 12; ++j) CHECK(out(i, j) == (j < 3 ? g(i, j) : 0.0));

  DenseMatrix two = fuse({tape.constant(DenseMatrix{{2, 0}}), tape.constant(DenseMatrix{{0, 2}})},
                         tape.constant(DenseMatrix{{0.5, 0.5}}))
                        .value();
  CHECK(two == DenseMatrix{{1, 0, 0, 1}});

  DenseMatrix w = fixtures::random_dense(2, 4, rng, 0, 1);
  DenseMatrix r = fuse(blocks, tape.constant(w)).value();
  for (std::size_t m = 0; m < 4; ++m)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(std::abs(r(i, m * 3 + j) - w(i, m) * blocks[m].value()(i, j)) <= 1e-12);
  CHECK_THROWS_AS(fuse(blocks, tape.constant(DenseMatrix(2, 3))), StructuralError);
}

TEST_CASE("forward pass invariants and gradient") {
  std::mt19937_64 rng(24);
  const std::size_t n = 6;
  auto edges = oracle::random_connected_graph(n, 3, rng);
  SparseMatrix a = self_loop_operator(n, edges);
  EncoderInputs inputs;
  inputs.pattern = &a;
  inputs.features[Modality::r] = fixtures::random_dense(n, 3, rng);
  inputs.features[Modality::t] = fixtures::random_dense(n, 5, rng);
  EncoderConfig c = small_config(4, {Modality::g, Modality::r, Modality::t}, 2);
  c.ffn_dim = 6;
  EncoderParams p = init_params(c, n, {{Modality::r, 3}, {Modality::t, 5}}, 10);

  Tape tape;
  ForwardResult r = forward(inputs, bind(tape, p), c);
  CHECK(r.h_ori.cols() == 12);
  CHECK(r.h_fus.cols() == 12);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0;
    for (std::size_t m = 0; m < 3; ++m) total += r.confidence.value()(i, m);
    CHECK(std::abs(total - 1.0) <= 1e-8);
  }
  CHECK(joint_embedding(inputs, p) == r.h_ori.value());

  DenseMatrix probe = fixtures::random_dense(n, 12, rng);
  std::vector<DenseMatrix*> params = tensors(p);
  auto loss = [&](Tape& t, std::span<const Var> vs) {
    ParamVars pv = bind(t, p);
    std::vector<Var*> slots = vars(pv);
    for (std::size_t k = 0; k < slots.size(); ++k) *slots[k] = vs[k];
    ForwardResult f = forward(inputs, pv, c);
    Var w = t.constant(probe);
    return tensor::add(tensor::sum(tensor::hadamard(f.h_fus, w)), tensor::sum(tensor::hadamard(f.h_ori, w)));
  };
  tensor::GradCheckReport rep = tensor::grad_check(loss, params);
  CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("checkpoint round trip") {
  EncoderConfig c = small_config(4, {Modality::g, Modality::v}, 2);
  c.gat_slope = 0.15;
  EncoderParams p = init_params(c, 3, {{Modality::v, 2}}, 11);
  p.w_o(0, 0) = 1.0 / 3.0;
  p.fc_b.at(Modality::v)(0, 1) = -0.0;
  std::stringstream buf;
  write_checkpoint(p, buf);
  EncoderParams back = read_checkpoint(buf, "mem");
  CHECK(back == p);
  std::stringstream again;
  write_checkpoint(back, again);
  std::stringstream first;
  write_checkpoint(p, first);
  CHECK(again.str() == first.str());

  std::string text = first.str();
  std::stringstream bad(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(read_checkpoint(bad, "mem"), IngestionError);
  std::string swapped = text;
  swapped.replace(swapped.find("x_g 3 4"), 7, "x_g 3 5");
  std::stringstream bad2(swapped);
  try {
    read_checkpoint(bad2, "mem");
    FAIL("expected an ingestion error");
  } catch (const IngestionError& e) {
    CHECK(std::string(e.what()).find("x_g is 3x5") != std::string::npos);
  }
}
