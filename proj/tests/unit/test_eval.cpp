#include <algorithm>
#include <cmath>
#include <random>

#include "desalign/errors.hpp"
#include "desalign/eval/metrics.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace desalign;
using namespace desalign::eval;

namespace {

GoldPairs diagonal(std::size_t n) {
  GoldPairs g;
  for (std::size_t i = 0; i < n; ++i) g.emplace_back(i, i);
  return g;
}

}  // namespace

TEST_CASE("similarity_matrix") {
  DenseMatrix e{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  CHECK(similarity_matrix(e, e) == DenseMatrix::identity(3));

  DenseMatrix a{{1, 2, 3}};
  DenseMatrix b{{2.5, 5, 7.5}, {0, 0, 0}};
  DenseMatrix s = similarity_matrix(a, b);
  CHECK(s(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s(0, 1) == 0.0);

  std::mt19937_64 rng(5);
  DenseMatrix xs = fixtures::random_dense(5, 3, rng);
  DenseMatrix xt = fixtures::random_dense(5, 3, rng);
  DenseMatrix omega = similarity_matrix(xs, xt);
  auto os = fixtures::to_oracle(xs);
  auto ot = fixtures::to_oracle(xt);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(omega(i, j) - oracle::cosine(os[i], ot[j])) <= 1e-12);

  CHECK_THROWS_AS(similarity_matrix(DenseMatrix(2, 3), DenseMatrix(2, 4)), StructuralError);
}

TEST_CASE("hits_at_k and mrr examples") {
  CHECK(hits_at_k(DenseMatrix::identity(4), diagonal(4), 1) == 1.0);
  CHECK(mrr(DenseMatrix::identity(4), diagonal(4)) == 1.0);

  DenseMatrix omega{{0.9, 0.1}, {0.8, 0.2}};
  CHECK(gold_ranks(omega, diagonal(2)) == std::vector<std::size_t>{1, 2});
  CHECK(hits_at_k(omega, diagonal(2), 1) == 0.5);
  CHECK(hits_at_k(omega, diagonal(2), 2) == 1.0);
  CHECK(mrr(omega, diagonal(2)) == 0.75);

  DenseMatrix flipped{{0.1, 0.9}, {0.8, 0.2}};
  CHECK(mrr(flipped, diagonal(2)) == 0.5);

  DenseMatrix flat(4, 4, 0.3);
  CHECK(gold_ranks(flat, diagonal(4)) == std::vector<std::size_t>{1, 2, 3, 4});
  CHECK(hits_at_k(flat, diagonal(4), 1) == 0.25);
}

TEST_CASE("metric errors") {
  CHECK_THROWS_AS(hits_at_k(DenseMatrix::identity(2), {{0, 2}}, 1), StructuralError);
  CHECK_THROWS_AS(hits_at_k(DenseMatrix::identity(2), diagonal(2), 0), ConfigError);
  MetricsReport r = evaluate(DenseMatrix::identity(2), diagonal(2));
  CHECK_THROWS_AS(r.hits_at(5), ConfigError);
  CHECK(r.tie_policy == std::string(kTiePolicy));
}

TEST_CASE("metrics match the full-sort oracle") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> size(1, 120);
  std::uniform_int_distribution<int> coarse(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = size(rng);
    DenseMatrix omega = fixtures::random_dense(n, n, rng);
    // coarse values force plenty of ties on odd trials
    if (trial % 2)
      for (double& v : omega.data()) v = coarse(rng) / 4.0;
    GoldPairs gold;
    std::vector<std::size_t> cols(n);
    for (std::size_t i = 0; i < n; ++i) cols[i] = i;
    std::shuffle(cols.begin(), cols.end(), rng);
    for (std::size_t i = 0; i < n; ++i) gold.emplace_back(i, cols[i]);

    auto o = fixtures::to_oracle(omega);
    std::vector<std::size_t> expected;
    for (auto [i, g] : gold) expected.push_back(oracle::full_sort_rank(o[i], g));
    CHECK(gold_ranks(omega, gold) == expected);

    MetricsReport r = evaluate(omega, gold, {1, 5, 10});
    CHECK(r.hits_at(1) <= r.hits_at(5));
    CHECK(r.hits_at(5) <= r.hits_at(10));
    CHECK(r.hits_at(1) <= r.mrr);
    CHECK(r.mrr <= 1.0);
  }
}

TEST_CASE("ranking is invariant under increasing transforms") {
  std::mt19937_64 rng(7);
  DenseMatrix omega = fixtures::random_dense(30, 30, rng);
  DenseMatrix mapped = omega;
  for (double& v : mapped.data()) v = std::exp(3.0 * v) + 1.0;
  CHECK(gold_ranks(omega, diagonal(30)) == gold_ranks(mapped, diagonal(30)));
}
