#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "ictxot/linalg.hpp"
#include "ictxot/mmd.hpp"

namespace ictxot::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  /// Adjoint after backward(); an all-zero matrix if nothing flowed here.
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Value of a 1×1 node.
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in creation order, which is a
/// topological order, so backward() walks the vector from the back.
/// Single-threaded; use one tape per thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable input; its gradient is kept after backward().
  Var leaf(Matrix value);
  Var constant(Matrix value);
  Var constant(double value) { return constant(Matrix(1, 1, value)); }

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws DimensionError unless
  /// the loss is 1×1. May be called once per tape.
  void backward(Var loss);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Smallest |pre-activation| seen by any ReLU on this tape. Finite
  /// difference checks use it to stay clear of kinks.
  double min_relu_margin() const { return min_relu_margin_; }
  void note_relu_margin(double m) {
    if (m < min_relu_margin_) min_relu_margin_ = m;
  }

  /// Adds `delta` into the adjoint of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Matrix& delta);
  void accumulate(std::size_t id, Matrix&& delta);
  /// Mutable adjoint of `id`, allocated as zeros if needed.
  Matrix& grad_ref(std::size_t id);

  /// Appends an op node. `backward` is dropped when no parent needs a gradient.
  Var push(Matrix value, std::vector<std::size_t> parents, BackwardFn backward);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  double min_relu_margin_ = std::numeric_limits<double>::infinity();
};

// Forward ops. Shape mismatches throw DimensionError naming both shapes.

Var matmul(Var a, Var b);
/// aᵀ·b
Var matmul_tn(Var a, Var b);
/// a·bᵀ
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1×c row to every row of an r×c matrix.
Var add_row(Var a, Var row);
Var relu(Var a);
/// Softmax down each column: every column of the result sums to 1.
Var softmax_columns(Var a);
/// 1×c row of column means.
Var mean_rows(Var a);
Var sum(Var a);
Var trace(Var a);
Var frob_sq(Var a);
/// u·vᵀ for vectors stored as r×1 or 1×r matrices.
Var outer(Var u, Var v);
Var concat_rows(Var top, Var bottom);
/// (A + Aᵀ)/2 with mirrored entries computed once.
Var symmetrize(Var a);
/// Mean over rows of the squared row norms of a − b: (1/r)Σᵢ‖aᵢ − bᵢ‖².
Var mean_sq_dist(Var a, Var b);

/// Elementwise ψ(z) = Σ_k c_k·relu(w_k z + b_k) with c, w, b stored as 1×m rows.
Var relu_expansion(Var z, Var c, Var w, Var b);

/// Unbiased MMD² between `pred` (differentiable) and fixed `target`.
/// In adaptive-bandwidth mode σ₀ is recomputed from pred ∪ target and the
/// gradient flows through it as well.
Var mmd2_u(Var pred, const Matrix& target, const KernelSpec& spec);

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares `gradient` with central differences of `f` at `point`.
/// Per coordinate the error is |a − n| / max(|a|, |n|, floor) with
/// floor = 1e-6·max(1, |f(point)|): derivatives below that size are under
/// the roundoff of a difference quotient and are compared absolutely.
FiniteDiffReport finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                   std::span<const double> gradient,
                                   std::span<const double> point, double step = 1e-5);

}  // namespace ictxot::ad
