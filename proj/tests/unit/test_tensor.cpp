#include <cmath>
#include <random>

#include "desalign/errors.hpp"
#include "desalign/tensor/autodiff.hpp"
#include "desalign/tensor/dense.hpp"
#include "desalign/tensor/linalg.hpp"
#include "desalign/tensor/sparse.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace desalign;
using namespace desalign::tensor;

namespace {

SparseMatrix dense_to_sparse(std::initializer_list<std::initializer_list<double>> rows) {
  return SparseMatrix::from_dense(DenseMatrix(rows));
}

GradCheckReport check(const LossBuilder& fn, std::vector<DenseMatrix>& params) {
  std::vector<DenseMatrix*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  return grad_check(fn, ptrs);
}

}  // namespace

TEST_CASE("dense basics") {
  DenseMatrix a{{1, 2}, {3, 4}};
  DenseMatrix b{{0, 1}, {1, 0}};
  CHECK(matmul(a, b) == DenseMatrix{{2, 1}, {4, 3}});
  CHECK(matmul_nt(a, a) == matmul(a, a.transpose()));
  CHECK(matmul_tn(a, a) == matmul(a.transpose(), a));
  CHECK_THROWS_AS(matmul(a, DenseMatrix(3, 1)), StructuralError);
  CHECK_THROWS_AS(DenseMatrix(2, 2, std::vector<double>{1, 2, 3}), StructuralError);
  DenseMatrix z(2, 3);
  CHECK(l2_normalize_rows(z) == z);
  DenseMatrix n = l2_normalize_rows(DenseMatrix{{3, 4}});
  CHECK(n(0, 0) == doctest::Approx(0.6));
  CHECK(n(0, 1) == doctest::Approx(0.8));
}

TEST_CASE("sparse construction sums duplicates and keeps column order") {
  SparseMatrix s = SparseMatrix::from_triplets(2, 3, {{1, 2, 1.0}, {0, 1, 2.0}, {1, 0, 3.0}, {0, 1, 0.5}});
  CHECK(s.nnz() == 3);
  CHECK(s.at(0, 1) == 2.5);
  CHECK(s.at(1, 0) == 3.0);
  CHECK(s.at(1, 2) == 1.0);
  CHECK(s.at(0, 0) == 0.0);
  auto ci = s.col_idx();
  CHECK(ci[1] < ci[2]);
  CHECK_THROWS_AS(SparseMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), StructuralError);

  std::mt19937_64 rng(3);
  DenseMatrix x = fixtures::random_dense(3, 4, rng);
  DenseMatrix dense = s.to_dense();
  CHECK(max_abs_diff(s.multiply(x), matmul(dense, x)) < 1e-15);
}

TEST_CASE("block_diagonal places blocks on the diagonal") {
  SparseMatrix a = dense_to_sparse({{1, 2}, {3, 4}});
  SparseMatrix b = dense_to_sparse({{5}});
  DenseMatrix d = block_diagonal(a, b).to_dense();
  CHECK(d == DenseMatrix{{1, 2, 0}, {3, 4, 0}, {0, 0, 5}});
}

TEST_CASE("lambda_max on small Laplacians") {
  // K3 without self-loops: Δ = I − A/2
  SparseMatrix k3 = dense_to_sparse({{1, -0.5, -0.5}, {-0.5, 1, -0.5}, {-0.5, -0.5, 1}});
  CHECK(lambda_max(k3).value == doctest::Approx(1.5).epsilon(1e-10));
  SparseMatrix p2 = dense_to_sparse({{1, -1}, {-1, 1}});
  CHECK(lambda_max(p2).value == doctest::Approx(2.0).epsilon(1e-10));
  EigenEstimate id = lambda_max(SparseMatrix::identity(5));
  CHECK(id.value == doctest::Approx(1.0));
  CHECK(id.converged);

  CHECK_THROWS_AS(lambda_max(SparseMatrix(2, 3)), StructuralError);
  CHECK_THROWS_AS(lambda_max(dense_to_sparse({{1, 2}, {0, 1}})), StructuralError);
}

TEST_CASE("lambda_max never overshoots the dense eigensolve") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + trial * 2;
    auto edges = oracle::random_connected_graph(n, n, rng);
    SparseMatrix lap = fixtures::oracle_laplacian(n, edges, trial % 2 == 0);
    const double truth = oracle::symmetric_eigenvalues(fixtures::to_oracle(lap.to_dense())).back();
    EigenEstimate est = lambda_max(lap);
    CHECK(est.value <= truth * (1 + 1e-12) + 1e-12);
    CHECK(est.value == doctest::Approx(truth).epsilon(1e-6));
  }
}

TEST_CASE("singular_value_bounds") {
  SingularValueBounds d = singular_value_bounds(DenseMatrix{{2, 0}, {0, 3}});
  CHECK(d.p_min == doctest::Approx(4.0));
  CHECK(d.p_max == doctest::Approx(9.0));
  SingularValueBounds i = singular_value_bounds(DenseMatrix::identity(4));
  CHECK(i.p_min == doctest::Approx(1.0));
  CHECK(i.p_max == doctest::Approx(1.0));
  CHECK_THROWS_AS(singular_value_bounds(DenseMatrix(2, 3)), StructuralError);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    DenseMatrix w = fixtures::random_dense(5, 5, rng);
    auto sv = oracle::singular_values(fixtures::to_oracle(w));
    SingularValueBounds b = singular_value_bounds(w);
    CHECK(std::abs(b.p_max - sv.front() * sv.front()) <= 1e-8);
    CHECK(std::abs(b.p_min - sv.back() * sv.back()) <= 1e-8);
  }
}

TEST_CASE("spectral_norm matches the largest singular value") {
  std::mt19937_64 rng(6);
  DenseMatrix x = fixtures::random_dense(12, 4, rng);
  auto sv = oracle::singular_values(fixtures::to_oracle(x));
  CHECK(spectral_norm(x) == doctest::Approx(sv.front()).epsilon(1e-9));
}

TEST_CASE("solve_spd") {
  std::mt19937_64 rng(7);
  DenseMatrix b = fixtures::random_dense(4, 3, rng);
  CHECK(max_abs_diff(solve_spd(DenseMatrix::identity(4), b), b) < 1e-15);

  DenseMatrix x = solve_spd(DenseMatrix{{2, 0}, {0, 4}}, DenseMatrix{{2}, {8}});
  CHECK(x(0, 0) == doctest::Approx(1.0));
  CHECK(x(1, 0) == doctest::Approx(2.0));

  for (int trial = 0; trial < 10; ++trial) {
    DenseMatrix r = fixtures::random_dense(10, 10, rng);
    DenseMatrix m = matmul_tn(r, r) + DenseMatrix::identity(10);
    DenseMatrix rhs = fixtures::random_dense(10, 2, rng);
    DenseMatrix sol = solve_spd(m, rhs);
    CHECK(max_abs_diff(matmul(m, sol), rhs) <= 1e-8 * std::max(1.0, max_abs(rhs)));
  }

  CHECK_THROWS_AS(solve_spd(DenseMatrix{{1, 2}, {2, 1}}, DenseMatrix{{1}, {1}}), NumericalError);
  try {
    solve_spd(DenseMatrix{{1, 0}, {0, -1}}, DenseMatrix{{1}, {1}});
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("pivot 1") != std::string::npos);
  }
}

TEST_CASE("grad_check: quadratic has gradient W") {
  std::mt19937_64 rng(1);
  std::vector<DenseMatrix> params{fixtures::random_dense(3, 4, rng)};
  const DenseMatrix w0 = params[0];
  auto fn = [](Tape&, std::span<const Var> p) { return scale(sum(hadamard(p[0], p[0])), 0.5); };
  GradCheckReport r = check(fn, params);
  CHECK(r.max_rel_error <= 1e-9);
  CHECK(params[0] == w0);  // restored

  Tape t;
  Var w = t.parameter(w0);
  t.backward(fn(t, std::vector<Var>{w}));
  CHECK(max_abs_diff(t.grad(w), w0) == 0.0);
}

TEST_CASE("grad_check: softmax outputs") {
  std::mt19937_64 rng(2);
  std::vector<DenseMatrix> params{fixtures::random_dense(3, 5, rng)};
  auto plain = [](Tape&, std::span<const Var> p) { return sum(softmax_rows(p[0])); };
  CHECK(check(plain, params).max_rel_error <= 1e-4);
  const DenseMatrix weights = fixtures::random_dense(3, 5, rng);
  auto weighted = [&](Tape& t, std::span<const Var> p) {
    return sum(hadamard(softmax_rows(p[0]), t.constant(weights)));
  };
  CHECK(check(weighted, params).max_rel_error <= 1e-4);
}

TEST_CASE("grad_check: every primitive") {
  std::mt19937_64 rng(9);
  auto weigh = [&](Tape& t, Var v) {
    // random linear readout so gradients are not trivially uniform
    std::mt19937_64 local(v.rows() * 31 + v.cols());
    return sum(hadamard(v, t.constant(fixtures::random_dense(v.rows(), v.cols(), local))));
  };

  SUBCASE("matmul and matmul_nt") {
    std::vector<DenseMatrix> p{fixtures::random_dense(4, 3, rng), fixtures::random_dense(3, 2, rng)};
    CHECK(check([&](Tape& t, std::span<const Var> v) { return weigh(t, matmul(v[0], v[1])); }, p).max_rel_error <=
          1e-4);
    std::vector<DenseMatrix> q{fixtures::random_dense(4, 3, rng), fixtures::random_dense(5, 3, rng)};
    CHECK(check([&](Tape& t, std::span<const Var> v) { return weigh(t, matmul_nt(v[0], v[1])); }, q).max_rel_error <=
          1e-4);
  }
  SUBCASE("elementwise and broadcast") {
    std::vector<DenseMatrix> p{fixtures::random_dense(4, 3, rng), fixtures::random_dense(4, 3, rng),
                               fixtures::random_dense(1, 3, rng), fixtures::random_dense(4, 1, rng)};
    auto fn = [&](Tape& t, std::span<const Var> v) {
      Var a = add(hadamard(v[0], v[1]), scale(v[0], 0.3));
      Var b = sub(add_row(a, v[2]), mul_row(v[1], v[2]));
      Var c = add_scalar(mul_col(b, v[3]), 0.7);
      return weigh(t, c);
    };
    CHECK(check(fn, p).max_rel_error <= 1e-4);
  }
  SUBCASE("relu, exp, log") {
    std::vector<DenseMatrix> p{fixtures::random_dense(4, 3, rng, 0.1, 2.0)};
    auto fn = [&](Tape& t, std::span<const Var> v) {
      return weigh(t, add(relu(add_scalar(v[0], -1.0)), add(exp(v[0]), log(v[0]))));
    };
    CHECK(check(fn, p).max_rel_error <= 1e-4);
  }
  SUBCASE("layer norm and row normalization") {
    std::vector<DenseMatrix> p{fixtures::random_dense(4, 5, rng)};
    CHECK(check([&](Tape& t, std::span<const Var> v) { return weigh(t, layer_norm_rows(v[0])); }, p).max_rel_error <=
          1e-4);
    CHECK(check([&](Tape& t, std::span<const Var> v) { return weigh(t, normalize_rows(v[0])); }, p).max_rel_error <=
          1e-4);
  }
  SUBCASE("concat, slice, gather, reductions") {
    std::vector<DenseMatrix> p{fixtures::random_dense(4, 3, rng), fixtures::random_dense(4, 2, rng)};
    auto fn = [&](Tape& t, std::span<const Var> v) {
      const Var cols[] = {v[0], v[1]};
      Var c = concat_cols(cols);
      const Var rows[] = {c, slice_rows(c, 1, 2)};
      Var r = concat_rows(rows);
      const std::size_t idx[] = {5, 0, 0, 2};
      Var g = gather_rows(slice_cols(r, 1, 3), idx);
      return add(weigh(t, g), scale(sum(hadamard(row_sum(g), row_sum(g))), 0.1));
    };
    CHECK(check(fn, p).max_rel_error <= 1e-4);
  }
  SUBCASE("cosine similarity and compositions") {
    std::vector<DenseMatrix> p{fixtures::random_dense(4, 3, rng), fixtures::random_dense(5, 3, rng)};
    auto fn = [&](Tape& t, std::span<const Var> v) {
      Var s = cosine_similarity(v[0], v[1]);
      Var m = minimum(leaky_relu(s, 0.2), scale(s, 0.5));
      return add(weigh(t, maximum(m, 0.05)), mean(s));
    };
    CHECK(check(fn, p).max_rel_error <= 1e-4);
  }
  SUBCASE("sparse and edge primitives") {
    SparseMatrix pattern = SparseMatrix::from_triplets(
        4, 4, {{0, 0, 1}, {0, 1, 1}, {1, 0, 1}, {1, 1, 1}, {1, 2, 1}, {2, 1, 1}, {2, 2, 1}, {3, 3, 1}, {2, 3, 1}});
    std::vector<DenseMatrix> p{fixtures::random_dense(4, 3, rng), fixtures::random_dense(4, 1, rng),
                               fixtures::random_dense(4, 1, rng)};
    auto fn = [&](Tape& t, std::span<const Var> v) {
      Var e = leaky_relu(edge_scores(v[1], v[2], pattern), 0.2);
      Var w = edge_softmax(e, pattern);
      Var out = edge_aggregate(w, v[0], pattern);
      return weigh(t, add(out, spmm(pattern, v[0])));
    };
    CHECK(check(fn, p).max_rel_error <= 1e-4);
  }
}

TEST_CASE("edge_softmax normalizes within each row") {
  SparseMatrix pattern = SparseMatrix::from_triplets(3, 3, {{0, 0, 1}, {0, 2, 1}, {1, 1, 1}, {2, 0, 1}, {2, 1, 1},
                                                           {2, 2, 1}});
  Tape t;
  Var s = t.constant(DenseMatrix{{1}, {2}, {5}, {0}, {0}, {0}});
  DenseMatrix w = edge_softmax(s, pattern).value();
  CHECK(w(0, 0) + w(1, 0) == doctest::Approx(1.0));
  CHECK(w(2, 0) == doctest::Approx(1.0));
  CHECK(w(3, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("backward skips branches without parameters") {
  Tape t;
  Var c = t.constant(DenseMatrix{{1, 2}});
  Var p = t.parameter(DenseMatrix{{3, 4}});
  Var loss = sum(hadamard(add(c, c), p));
  t.backward(loss);
  CHECK(t.grad(p) == DenseMatrix{{2, 4}});
  CHECK(t.grad(c) == DenseMatrix{{0, 0}});
  CHECK_THROWS_AS(t.backward(p), StructuralError);
}

TEST_CASE("log rejects non-positive input") {
  Tape t;
  CHECK_THROWS_AS(log(t.constant(DenseMatrix{{0.0}})), NumericalError);
}

TEST_CASE("grad_check rejects a non-finite loss") {
  std::vector<DenseMatrix> p{DenseMatrix{{1.0}}};
  auto fn = [](Tape&, std::span<const Var> v) { return scale(sum(v[0]), std::numeric_limits<double>::infinity()); };
  CHECK_THROWS_AS(check(fn, p), NumericalError);
}

TEST_CASE("results are bit-identical across repeated runs") {
  auto run = [] {
    std::mt19937_64 rng(42);
    std::vector<DenseMatrix> p{fixtures::random_dense(6, 4, rng)};
    Tape t;
    Var w = t.parameter(p[0]);
    Var loss = sum(softmax_rows(matmul_nt(layer_norm_rows(w), w)));
    t.backward(loss);
    return std::make_pair(loss.scalar(), t.grad(w));
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
