#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ictxot/linalg.hpp"
#include "ictxot/parametric.hpp"
#include "ictxot/tasks.hpp"

namespace ictxot {

/// One eigen-coordinate of the penalized matrix problem: σ = √(σᵢ²).
struct SurrogateSpec {
  double sigma = 1.0;
  double lambda = 1.0;

  void validate() const;  // sigma > 0, lambda ≥ 0 and finite
};

/// h(x) = x² − 2x + λ(x² − σ²)²
double h_value(double x, const SurrogateSpec& spec);
/// h′(x), evaluated as 2(x − 1) + 4λx(x − σ)(x + σ) so it vanishes exactly at
/// representable stationary points.
double h_derivative(double x, const SurrogateSpec& spec);
double h_second_derivative(double x, const SurrogateSpec& spec);

struct SurrogateMin {
  double argmin = 0.0;
  double value = 0.0;
};

/// Global minimizer of h. Every minimizer lies in [0, max(1, σ)], so a
/// 10⁵-point grid over [0, σ + |1 − σ|/σ² + 1] locates the basins; each local
/// grid minimum is refined by up to 50 safeguarded Newton steps on h′.
/// Requires λ > 0.
SurrogateMin h_min_bruteforce(const SurrogateSpec& spec);

/// |a* − σ| ≤ |1 − σ|/(σ²λ)
bool minimizer_within_bound(const SurrogateSpec& spec);

/// Smallest λ on a grid of 20 points per decade in [lo, hi] such that the
/// minimizer bound holds at that λ and at every larger grid value. Returns
/// +∞ when it fails at hi.
double find_lambda_star(double sigma, double lo = 1e-3, double hi = 1e6);

/// ‖A − I‖²_F + λ‖A² − Σ‖²_F
double surrogate_objective(const Matrix& a, const SymMatrix& cov, double lambda);

/// min over symmetric A of surrogate_objective: d + Σᵢ min h(σᵢ, λ). The
/// minimizer shares Σ's eigenvectors, so the problem splits per eigenvalue.
double f_min(const SymMatrix& cov, double lambda);
/// The task must be centered; the mean enters neither side of the problem.
double f_min(const GaussianTask& task, double lambda);

/// max over eigenvalues of (1 − σᵢ)²/σᵢ⁴
double stability_constant(const SymMatrix& cov);

/// (f(A) − f_min)/(1 + 2λσ²_min) + 2d·C/λ², the upper bound on ‖A − Σ^{1/2}‖²_F
/// for A sharing Σ's eigenvectors once λ is large enough.
double stability_bound(const Matrix& a, const SymMatrix& cov, double lambda);

struct ExcessLossReport {
  double risk = 0.0;       // Monte-Carlo mean of loss() on fresh prompts
  double reference = 0.0;  // mean f_min over the test tasks
  double excess = 0.0;     // risk − reference
  /// Mean of λ·E‖Σₙ − Σ‖²_F = λ(tr(Σ)² + tr(Σ²))/n: the part of the risk that
  /// no in-context map can remove at prompt length n. Already inside `excess`.
  double sample_noise = 0.0;
  std::size_t n = 0;
};

/// Each centered test task k gets 2n fresh samples from stream (seed, Eval, k):
/// the first n build A, the second n build Σₙ.
ExcessLossReport excess_loss_estimate(const ParametricParams& params, std::span<const GaussianTask> tasks,
                                      double lambda, std::size_t n_test, std::uint64_t seed);

/// Mean over tasks of ‖A_n − Σ^{1/2}‖²_F with n fresh samples per task from
/// stream (seed, Eval, k).
double transport_map_error(const ParametricParams& params, std::span<const GaussianTask> tasks, std::size_t n_test,
                           std::uint64_t seed);

enum class ErrorKind { ExcessLoss, MapError };

std::string to_string(ErrorKind kind);

struct ScalingPoint {
  double n = 0.0;
  double error = 0.0;
  ErrorKind kind = ErrorKind::ExcessLoss;
};

/// error ≈ a·n^{−1/2} + b·n^{−1} + c
struct FitResult {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double r2 = 0.0;
  ErrorKind kind = ErrorKind::ExcessLoss;

  double predict(double n) const;
  std::string model_string() const;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Least squares via Householder QR. Needs ≥ 4 points of one kind with
/// distinct n ≥ 1; throws FitError otherwise or when the design is rank
/// deficient. R² = 1 − SS_res/SS_tot (1 when both vanish).
FitResult fit_scaling_law(std::span<const ScalingPoint> points);

}  // namespace ictxot
