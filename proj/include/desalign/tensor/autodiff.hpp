#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "desalign/tensor/dense.hpp"
#include "desalign/tensor/sparse.hpp"

namespace desalign::tensor {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid as long as the
/// tape is alive.
class Var {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr && id_ != npos; }

  const DenseMatrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Shortcut for 1x1 values.
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = npos;
};

/// Reverse-mode recording of a computation over the fixed primitive set
/// below. Single-threaded; one tape per forward/backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(DenseMatrix value);
  /// Leaf that receives a gradient on backward().
  Var parameter(DenseMatrix value);

  const DenseMatrix& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward() target; zero matrix when unreached.
  const DenseMatrix& grad(Var v);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<Var>& parameters() const noexcept { return params_; }

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. `loss` must
  /// be 1x1.
  void backward(Var loss);

  Var record(DenseMatrix value, std::span<const Var> parents, BackwardFn backward);
  /// Mutable gradient buffer of a node, allocated as zeros on first use.
  DenseMatrix& grad_buffer(std::size_t id);

 private:
  struct Node {
    DenseMatrix value;
    DenseMatrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::vector<Var> params_;
};

// ---- primitive operations -------------------------------------------------
// Shapes are checked eagerly; mismatches throw StructuralError.

Var matmul(Var a, Var b);
/// a · bᵀ
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// a (n×c) + row (1×c), broadcast over rows
Var add_row(Var a, Var row);
/// a (n×c) ⊙ row (1×c), broadcast over rows
Var mul_row(Var a, Var row);
/// a (n×c) ⊙ col (n×1), broadcast over columns
Var mul_col(Var a, Var col);

Var relu(Var a);
Var exp(Var a);
/// Natural log; throws NumericalError on non-positive input.
Var log(Var a);
Var softmax_rows(Var a);
/// Per-row standardization (x − mean) / sqrt(var + eps), no affine part.
Var layer_norm_rows(Var a, double eps = 1e-5);
/// Rows scaled to unit L2 norm; all-zero rows map to zero.
Var normalize_rows(Var a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var gather_rows(Var a, std::span<const std::size_t> rows);

/// 1×1 sum of all entries.
Var sum(Var a);
/// n×1 row sums.
Var row_sum(Var a);

/// S · a for a constant sparse S. S must outlive the tape's backward pass.
Var spmm(const SparseMatrix& s, Var a);

// Graph-attention primitives over the sparsity pattern of a CSR matrix
// (values ignored). Edge k is the k-th stored entry. The pattern must outlive
// the tape's backward pass.

/// nnz×1 scores e_k = src[row(k)] + dst[col(k)] for n×1 inputs.
Var edge_scores(Var src, Var dst, const SparseMatrix& pattern);
/// Softmax of nnz×1 edge values within each row of the pattern.
Var edge_softmax(Var scores, const SparseMatrix& pattern);
/// out_i = Σ_{k in row i} w_k · x_{col(k)}.
Var edge_aggregate(Var weights, Var x, const SparseMatrix& pattern);

// ---- compositions of the primitives ---------------------------------------

Var mean(Var a);
Var leaky_relu(Var a, double slope);
/// Elementwise min(a, b) = b − relu(b − a).
Var minimum(Var a, Var b);
/// Elementwise max(a, c) = c + relu(a − c) for a constant c.
Var maximum(Var a, double c);
/// Cosine similarity matrix between rows of a and rows of b.
Var cosine_similarity(Var a, Var b);

// ---- gradient verification ------------------------------------------------

struct GradCheckReport {
  double loss = 0.0;
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_tape_grad = 0.0;
  double worst_fd_grad = 0.0;
};

/// Builds the scalar loss on a fresh tape given one parameter Var per entry of
/// the parameter list (same order).
using LossBuilder = std::function<Var(Tape&, std::span<const Var> params)>;

/// Compares tape gradients against central differences
/// (loss(θ+eps) − loss(θ−eps)) / (2·eps) for every parameter entry.
/// Relative error is |g_tape − g_fd| / max(|g_tape|, |g_fd|, abs_floor).
/// Parameters are restored on return. Throws NumericalError on a non-finite
/// loss.
GradCheckReport grad_check(const LossBuilder& loss_fn, std::span<DenseMatrix* const> params, double eps = 1e-5,
                           double abs_floor = 1e-6);

}  // namespace desalign::tensor
