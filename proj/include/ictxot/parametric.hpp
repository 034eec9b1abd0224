#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "ictxot/linalg.hpp"
#include "ictxot/rng.hpp"

namespace ictxot {

/// One term c·relu(w·z + b) of the scalar activation ψ.
struct ReluUnit {
  double c = 0.0;
  double w = 0.0;
  double b = 0.0;

  friend bool operator==(const ReluUnit&, const ReluUnit&) = default;
};

/// Raised when a requested approximation needs more path norm than allowed.
class CapacityError : public std::runtime_error {
 public:
  CapacityError(const std::string& what, double required)
      : std::runtime_error(what), required_(required) {}
  double required() const { return required_; }

 private:
  double required_;
};

/// φ(y) = ψ(W·y) with ψ applied per coordinate. ψ is kept both as its unit
/// list and as sorted breakpoints with prefix slopes, so evaluating it costs
/// one binary search regardless of the unit count.
class FeatureNet {
 public:
  FeatureNet() = default;
  FeatureNet(Matrix inner, std::vector<ReluUnit> units);

  const Matrix& inner() const { return inner_; }
  const std::vector<ReluUnit>& units() const { return units_; }
  std::size_t dim() const { return inner_.rows(); }

  double psi(double z) const;
  /// Rows φ(yᵢ) for every sample row yᵢ.
  Matrix features(const Matrix& samples) const;
  /// Σ|c|(|w| + |b|)
  double path_norm() const;

 private:
  void compile();

  Matrix inner_;
  std::vector<ReluUnit> units_;
  // Segment j covers (breaks_[j-1], breaks_[j]]; ψ = slope_[j]·z + offset_[j].
  std::vector<double> breaks_;
  std::vector<double> slope_;
  std::vector<double> offset_;
};

/// θ = (Q, φ) plus the penalty weight and the norm budget of the class.
struct ParametricParams {
  Matrix q;
  FeatureNet feature;
  double lambda = 0.0;
  double c_theta = 0.0;  // bound on ‖Q‖_F and ‖W‖_op
  double capacity = 0.0;  // bound on the path norm of ψ

  std::size_t dim() const { return q.rows(); }
  /// Throws std::invalid_argument if shapes disagree or a bound is violated
  /// by more than 1e-10.
  void validate() const;
};

/// A = Q·(1/n)Σᵢ φ(yᵢ)φ(yᵢ)ᵀ·Qᵀ, symmetrized.
SymMatrix forward_matrix(const ParametricParams& params, const Matrix& target_samples);

std::vector<double> predict(const ParametricParams& params, const Matrix& target_samples,
                            std::span<const double> query);

/// tr(A²) + d − 2tr(A) + λ‖A² − Σₙ‖²_F where the first half of the rows
/// builds A and the second half builds Σₙ = (1/n)Σ yᵢyᵢᵀ. The query term is
/// the closed form of E‖Ax − x‖² for x ~ N(0, I).
double loss(const ParametricParams& params, const Matrix& samples);

/// Mean of loss() over the given per-task sample sets.
double empirical_risk(const ParametricParams& params, std::span<const Matrix> task_samples);

/// Gradient of loss() in the parameter layout of ParametricParams.
struct ParametricGradient {
  double loss = 0.0;
  double transport = 0.0;  // loss without the λ term
  Matrix q;
  Matrix inner;
  std::vector<ReluUnit> units;  // (∂c, ∂w, ∂b) per unit
  double relu_margin = 0.0;     // smallest |w·z + b| seen in the forward pass
};

ParametricGradient grad_loss(const ParametricParams& params, const Matrix& samples);

/// Shrinks Q, W and the output weights c until ‖Q‖_F ≤ C_Θ, ‖W‖_op ≤ C_Θ and
/// path norm ≤ capacity. Each is a uniform rescale of its block.
void project_to_class(ParametricParams& params);

/// Flat layout used by the optimizer: Q, W (row-major), then c, w, b.
std::vector<double> pack(const ParametricParams& params);
ParametricParams unpack(const ParametricParams& like, std::span<const double> flat);

/// sign(z)·√|z|
double g_sq(double z);
/// g_sq outside [−δ, δ], linear z/√δ inside.
double g_eps(double z, double delta);

struct GsqNetwork {
  std::vector<ReluUnit> units;
  std::size_t knots = 0;     // interpolation cells on [0, r]
  double path_norm = 0.0;
  double grid_error = 0.0;   // sup |ψ − g_sq| on the verification grid
};

/// Odd piecewise-linear interpolant of g_eps (δ = ε²) on [−r, r], written as
/// a ReLU sum. Starts from ⌈4r/ε⌉ uniform cells and doubles the count until the
/// sup error against g_sq on 10⁴ grid points of [−r, r] is at most ε.
/// Throws CapacityError if the resulting path norm exceeds `capacity`.
GsqNetwork build_gsq_network(double eps, double radius, double capacity = 1e4);

/// Q = (π/2)^{1/4}·U, W = Uᵀ, ψ ≈ g_sq. With samples from N(0, UΛUᵀ) the
/// in-context matrix approaches UΛ^{1/2}Uᵀ. C_Θ is raised to ‖Q‖_F when that
/// exceeds √d so the returned params are inside their own class.
ParametricParams oracle_params(const Matrix& frame, double eps, double radius, double lambda = 0.0,
                               double capacity = 1e4);

/// Random starting point: Q, W = I + N(0, 0.1²) entries, c ~ N(0, 1/m),
/// w, b ~ N(0, 1). Bounds default to C_Θ = √d.
ParametricParams init_params(std::size_t dim, std::size_t units, double lambda, double capacity,
                             Stream& rng);

}  // namespace ictxot
