#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <queue>
#include <random>

#include "desalign/energy/energy.hpp"
#include "desalign/errors.hpp"
#include "desalign/eval/metrics.hpp"
#include "desalign/mmkg/mmkg.hpp"
#include "desalign/propagation/propagation.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace desalign;
using namespace desalign::propagation;

namespace {

using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

SparseMatrix normalized(std::size_t n, const Edges& edges, bool self_loops) {
  return SparseMatrix::from_dense(fixtures::from_oracle(oracle::normalized_adjacency(n, edges, self_loops)));
}

const Edges kP3{{0, 1}, {1, 2}};

std::vector<bool> random_known(std::size_t n, double missing, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<bool> known(n, true);
  const auto n_missing = static_cast<std::size_t>(std::llround(missing * static_cast<double>(n)));
  for (std::size_t k = 0; k < n_missing; ++k) known[idx[k]] = false;
  return known;
}

std::vector<bool> flip(const std::vector<bool>& v) {
  std::vector<bool> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = !v[i];
  return out;
}

std::size_t diameter(std::size_t n, const Edges& edges) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (auto [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::size_t best = 0;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::size_t> dist(n, n);
    std::queue<std::size_t> q;
    dist[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v : adj[u])
        if (dist[v] == n) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
    }
    for (std::size_t d : dist) best = std::max(best, d);
  }
  return best;
}

}  // namespace

TEST_CASE("propagation_step on P3") {
  SparseMatrix a = normalized(3, kP3, false);
  PropagationState s = make_state(DenseMatrix{{0}, {9}, {2}}, {true, false, true});
  PropagationState next = propagation_step(s, a);
  CHECK(next.x(0, 0) == 0.0);
  CHECK(next.x(1, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(next.x(2, 0) == 2.0);
  CHECK(next.iteration == 1);
  CHECK(next.snapshots.size() == 1);
  CHECK(s.iteration == 0);
}

TEST_CASE("propagation_step trivial cases") {
  std::mt19937_64 rng(8);
  SparseMatrix a = normalized(3, kP3, true);
  DenseMatrix x = fixtures::random_dense(3, 2, rng);
  CHECK(propagation_step(make_state(x, {true, true, true}), a).x == x);

  // D̃^{1/2}·1 is the eigenvector of Ã with eigenvalue 1
  DenseMatrix fixed{{std::sqrt(2.0)}, {std::sqrt(3.0)}, {std::sqrt(2.0)}};
  PropagationState s = propagation_step(make_state(fixed, {false, false, false}), a);
  CHECK(tensor::max_abs_diff(s.x, fixed) <= 1e-15);

  CHECK_THROWS_AS(make_state(x, {true}), StructuralError);
  CHECK_THROWS_AS(propagation_step(make_state(x, {true, true, true}), normalized(4, {{0, 1}}, true)),
                  StructuralError);
}

TEST_CASE("propagate on P3") {
  SparseMatrix a = normalized(3, kP3, false);
  DenseMatrix x{{0}, {9}, {2}};
  std::vector<bool> known{true, false, true};
  auto three = propagate(x, a, known, 3);
  REQUIRE(three.size() == 3);
  CHECK(three[1] == three[0]);
  CHECK(three[2] == three[0]);

  auto one = propagate(x, a, known, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == propagation_step(make_state(x, known), a).x);

  CHECK(propagate(x, a, known, 10, 1e-6).size() == 2);
  CHECK_THROWS_AS(propagate(x, a, known, 0), ConfigError);
  CHECK_THROWS_AS(propagate(x, a, known, 1, 0.0, 0.0), ConfigError);
}

TEST_CASE("general step size") {
  std::mt19937_64 rng(9);
  auto edges = oracle::random_connected_graph(12, 6, rng);
  SparseMatrix a = normalized(12, edges, true);
  DenseMatrix x = fixtures::random_dense(12, 3, rng);
  std::vector<bool> known = random_known(12, 0.3, rng);
  DenseMatrix expected = 0.5 * x + 0.5 * a.multiply(x);
  auto snaps = propagate(x, a, known, 1, 0.0, 0.5);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(snaps[0](i, c) == doctest::Approx(known[i] ? x(i, c) : expected(i, c)).epsilon(1e-14));

  // the damped scheme reaches the same fixed point
  auto slow = propagate(x, a, known, 20000, 1e-13, 0.5);
  auto fast = propagate(x, a, known, 20000, 1e-13, 1.0);
  CHECK(tensor::max_abs_diff(slow.back(), fast.back()) <= 1e-10);
}

TEST_CASE("closed_form_interpolation examples") {
  SparseMatrix lap = fixtures::oracle_laplacian(3, kP3, false);
  DenseMatrix x = closed_form_interpolation(DenseMatrix{{0}, {9}, {2}}, lap, {false, true, false});
  CHECK(x(1, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(x(0, 0) == 0.0);
  CHECK(x(2, 0) == 2.0);

  // C6 with a constant boundary
  Edges c6{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}};
  DenseMatrix c(6, 2, 3.25);
  c(2, 0) = -7;
  c(3, 1) = 11;
  for (bool loops : {false, true}) {
    DenseMatrix h = closed_form_interpolation(c, fixtures::oracle_laplacian(6, c6, loops),
                                              {false, false, true, true, false, false});
    CHECK(tensor::max_abs_diff(h, DenseMatrix(6, 2, 3.25)) <= 1e-12);
  }

  DenseMatrix y{{1}, {2}};
  CHECK(closed_form_interpolation(y, fixtures::oracle_laplacian(2, {{0, 1}}, true), {false, false}) == y);
}

TEST_CASE("closed_form_interpolation without a boundary") {
  // nodes 2 and 3 form their own component with nothing known
  Edges edges{{0, 1}, {2, 3}};
  SparseMatrix lap = fixtures::oracle_laplacian(4, edges, true);
  CHECK_THROWS_AS(closed_form_interpolation(DenseMatrix(4, 1, 1.0), lap, {false, false, true, true}),
                  NumericalError);
  CHECK_THROWS_AS(closed_form_interpolation(DenseMatrix(4, 1), lap, {false, true}), StructuralError);
}

TEST_CASE("closed form matches a brute-force dense solve") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 15 + 3 * trial;
    auto edges = oracle::random_connected_graph(n, n / 2, rng);
    const bool loops = trial % 2;
    oracle::Matrix a = oracle::normalized_adjacency(n, edges, loops);
    DenseMatrix x = fixtures::random_dense(n, 4, rng);
    std::vector<bool> known = random_known(n, 0.25, rng);
    std::vector<std::size_t> f, b;
    for (std::size_t i = 0; i < n; ++i) (known[i] ? b : f).push_back(i);
    oracle::Matrix lff(f.size(), std::vector<double>(f.size()));
    oracle::Matrix rhs(f.size(), std::vector<double>(4, 0.0));
    for (std::size_t p = 0; p < f.size(); ++p) {
      for (std::size_t q = 0; q < f.size(); ++q) lff[p][q] = (p == q ? 1.0 : 0.0) - a[f[p]][f[q]];
      for (std::size_t bi : b)
        for (std::size_t c = 0; c < 4; ++c) rhs[p][c] += a[f[p]][bi] * x(bi, c);
    }
    oracle::Matrix sol = oracle::solve(lff, rhs);
    DenseMatrix got = closed_form_interpolation(x, fixtures::oracle_laplacian(n, edges, loops), flip(known));
    for (std::size_t p = 0; p < f.size(); ++p)
      for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(got(f[p], c) - sol[p][c]) <= 1e-10);
  }
}

TEST_CASE("propagation converges to the closed form") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = trial == 0 ? 50 : 20 + 18 * trial;
    auto edges = oracle::random_connected_graph(n, n, rng);
    SparseMatrix a = normalized(n, edges, true);
    SparseMatrix lap = fixtures::oracle_laplacian(n, edges, true);
    DenseMatrix x = fixtures::random_dense(n, 8, rng);
    std::vector<bool> known = random_known(n, 0.2, rng);
    DenseMatrix closed = closed_form_interpolation(x, lap, flip(known));
    auto snaps = propagate(x, a, known, 10 * diameter(n, edges));
    CHECK(tensor::max_abs_diff(snaps.back(), closed) <= 1e-4);
  }
}

TEST_CASE("propagation invariants") {
  std::mt19937_64 rng(12);
  SUBCASE("unclamped smoothing") {
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 5 + trial % 40;
      auto edges = oracle::random_connected_graph(n, trial % 7, rng);
      const bool loops = trial % 3 != 0;
      SparseMatrix a = normalized(n, edges, loops);
      SparseMatrix lap = fixtures::oracle_laplacian(n, edges, loops);
      DenseMatrix x = fixtures::random_dense(n, 4, rng);
      CHECK(energy::dirichlet_energy(a.multiply(x), lap) <= energy::dirichlet_energy(x, lap) + 1e-12);
    }
  }
  SUBCASE("boundary rows are bit-identical") {
    auto edges = oracle::random_connected_graph(40, 30, rng);
    DenseMatrix x = fixtures::random_dense(40, 5, rng);
    std::vector<bool> known = random_known(40, 0.5, rng);
    for (const DenseMatrix& s : propagate(x, normalized(40, edges, true), known, 6))
      for (std::size_t i = 0; i < 40; ++i)
        if (known[i])
          for (std::size_t c = 0; c < 5; ++c) CHECK(s(i, c) == x(i, c));
  }
  SUBCASE("linearity") {
    auto edges = oracle::random_connected_graph(30, 20, rng);
    SparseMatrix a = normalized(30, edges, true);
    DenseMatrix x = fixtures::random_dense(30, 3, rng);
    DenseMatrix y = fixtures::random_dense(30, 3, rng);
    std::vector<bool> known = random_known(30, 0.4, rng);
    auto px = propagate(x, a, known, 4);
    auto py = propagate(y, a, known, 4);
    auto pxy = propagate(1.5 * x + (-0.75) * y, a, known, 4);
    for (std::size_t j = 0; j < 4; ++j) CHECK(tensor::max_abs_diff(pxy[j], 1.5 * px[j] + (-0.75) * py[j]) <= 1e-10);
  }
}

TEST_CASE("step cost grows with the edge count") {
  std::mt19937_64 rng(13);
  const std::size_t n = 20000;
  auto time_per_entry = [&](std::size_t extra) {
    auto edges = oracle::random_connected_graph(n, extra, rng);
    SparseMatrix a = mmkg::build_operators(fixtures::adjacency(n, edges), true).normalized;
    DenseMatrix x = fixtures::random_dense(n, 8, rng);
    std::vector<bool> known(n, false);
    PropagationState s = make_state(x, known);
    double best = 1e300;
    for (int rep = 0; rep < 7; ++rep) {
      auto t0 = std::chrono::steady_clock::now();
      advance(s, a);
      auto t1 = std::chrono::steady_clock::now();
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best / static_cast<double>(a.nnz() + n);
  };
  const double small = time_per_entry(2 * n);
  const double large = time_per_entry(4 * n);
  CHECK(large <= 1.5 * small);
}

TEST_CASE("averaged_similarity") {
  std::mt19937_64 rng(14);
  DenseMatrix s0 = fixtures::random_dense(6, 4, rng);
  DenseMatrix t0 = fixtures::random_dense(5, 4, rng);
  DenseMatrix s1 = fixtures::random_dense(6, 4, rng);
  DenseMatrix t1 = fixtures::random_dense(5, 4, rng);
  CHECK(averaged_similarity({s0}, {t0}) == eval::similarity_matrix(s0, t0));
  CHECK(tensor::max_abs_diff(averaged_similarity({s0, s0, s0}, {t0, t0, t0}), eval::similarity_matrix(s0, t0)) <=
        1e-15);
  DenseMatrix mean = 0.5 * (eval::similarity_matrix(s0, t0) + eval::similarity_matrix(s1, t1));
  CHECK(tensor::max_abs_diff(averaged_similarity({s0, s1}, {t0, t1}), mean) <= 1e-15);
  CHECK_THROWS_AS(averaged_similarity({s0, s1}, {t0}), StructuralError);
}

TEST_CASE("snapshot dump round-trips through the feature loader") {
  const auto dir = std::filesystem::temp_directory_path() / "desalign_prop_dump";
  std::filesystem::remove_all(dir);
  DenseMatrix x{{0.125, -2}, {3, 1e-17}};
  dump_snapshots({x, 2.0 * x}, {true, false}, dir.string(), "h");
  std::ofstream(dir / "triples.txt").close();
  mmkg::MMKGPaths paths;
  paths.triples = (dir / "triples.txt").string();
  paths.features[mmkg::Modality::t] = (dir / "h_1.txt").string();
  paths.masks[mmkg::Modality::t] = (dir / "h_1.mask").string();
  mmkg::MMKG g = mmkg::load_mmkg(paths);
  // rows flagged absent are zero-filled by the loader
  CHECK(g.table(mmkg::Modality::t).values == DenseMatrix{{0.25, -4}, {0, 0}});
  CHECK(g.table(mmkg::Modality::t).present == std::vector<bool>{true, false});
  std::filesystem::remove_all(dir);
}
