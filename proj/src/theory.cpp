#include "ictxot/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "ictxot/parallel.hpp"

namespace ictxot {

namespace {

constexpr std::size_t kSurrogateGrid = 100000;
constexpr int kNewtonSteps = 50;

std::vector<double> sqrt_eigenvalues(const SymMatrix& cov) {
  std::vector<double> sigma = sym_eig(cov).values;
  for (double& s : sigma) {
    if (!(s > 0.0)) throw std::invalid_argument("surrogate: covariance must be positive definite");
    s = std::sqrt(s);
  }
  return sigma;
}

void require_centered(std::span<const GaussianTask> tasks, const char* op) {
  if (tasks.empty()) throw std::invalid_argument(std::string(op) + ": no test tasks");
  for (const GaussianTask& t : tasks)
    if (!t.centered()) throw std::invalid_argument(std::string(op) + ": tasks must be centered");
}

}  // namespace

void SurrogateSpec::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("SurrogateSpec: sigma must be > 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("SurrogateSpec: lambda must be >= 0");
}

double h_value(double x, const SurrogateSpec& spec) {
  const double gap = x * x - spec.sigma * spec.sigma;
  return x * x - 2.0 * x + spec.lambda * gap * gap;
}

double h_derivative(double x, const SurrogateSpec& spec) {
  return 2.0 * (x - 1.0) + 4.0 * spec.lambda * x * (x - spec.sigma) * (x + spec.sigma);
}

double h_second_derivative(double x, const SurrogateSpec& spec) {
  return 2.0 + 4.0 * spec.lambda * (3.0 * x * x - spec.sigma * spec.sigma);
}

SurrogateMin h_min_bruteforce(const SurrogateSpec& spec) {
  spec.validate();
  const double s = spec.sigma;
  const double top = s + std::abs(1.0 - s) / (s * s) + 1.0;
  const double step = top / static_cast<double>(kSurrogateGrid - 1);
  std::vector<double> values(kSurrogateGrid);
  for (std::size_t i = 0; i < kSurrogateGrid; ++i) values[i] = h_value(step * static_cast<double>(i), spec);

  SurrogateMin best{0.0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < kSurrogateGrid; ++i) {
    const bool left_ok = i == 0 || values[i] <= values[i - 1];
    const bool right_ok = i + 1 == kSurrogateGrid || values[i] <= values[i + 1];
    if (!left_ok || !right_ok) continue;
    // Safeguarded Newton inside the neighbouring grid cells: h′ < 0 left of
    // the minimizer, > 0 right of it.
    double lo = step * static_cast<double>(i == 0 ? 0 : i - 1);
    double hi = step * static_cast<double>(std::min(i + 1, kSurrogateGrid - 1));
    double x = step * static_cast<double>(i);
    for (int it = 0; it < kNewtonSteps; ++it) {
      const double g = h_derivative(x, spec);
      if (g == 0.0) break;
      (g < 0.0 ? lo : hi) = x;
      const double curvature = h_second_derivative(x, spec);
      double next = x - g / curvature;
      if (!(curvature > 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (next == x) break;
      x = next;
    }
    const double v = h_value(x, spec);
    if (v < best.value) best = {x, v};
  }
  return best;
}

bool minimizer_within_bound(const SurrogateSpec& spec) {
  const SurrogateMin m = h_min_bruteforce(spec);
  const double s = spec.sigma;
  return std::abs(m.argmin - s) <= std::abs(1.0 - s) / (s * s * spec.lambda);
}

double find_lambda_star(double sigma, double lo, double hi) {
  if (!(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("find_lambda_star: need 0 < lo < hi");
  const auto steps = static_cast<int>(std::floor(20.0 * std::log10(hi / lo) + 1e-9));
  double star = std::numeric_limits<double>::infinity();
  for (int k = steps; k >= 0; --k) {
    const double lambda = lo * std::pow(10.0, k / 20.0);
    if (!minimizer_within_bound({sigma, lambda})) break;
    star = lambda;
  }
  return star;
}

double surrogate_objective(const Matrix& a, const SymMatrix& cov, double lambda) {
  if (a.rows() != cov.dim() || a.cols() != cov.dim()) throw DimensionError("surrogate_objective: shape mismatch");
  return frob_sq(a - Matrix::identity(a.rows())) + lambda * frob_sq(matmul(a, a) - cov.matrix());
}

double f_min(const SymMatrix& cov, double lambda) {
  double total = static_cast<double>(cov.dim());
  for (double s : sqrt_eigenvalues(cov)) total += h_min_bruteforce({s, lambda}).value;
  return total;
}

double f_min(const GaussianTask& task, double lambda) {
  if (!task.centered()) throw std::invalid_argument("f_min: task must be centered");
  return f_min(task.cov, lambda);
}

double stability_constant(const SymMatrix& cov) {
  double c = 0.0;
  for (double s : sqrt_eigenvalues(cov)) c = std::max(c, (1.0 - s) * (1.0 - s) / std::pow(s, 4));
  return c;
}

double stability_bound(const Matrix& a, const SymMatrix& cov, double lambda) {
  const double min_eig = sym_eig(cov).values.front();
  const double gap = surrogate_objective(a, cov, lambda) - f_min(cov, lambda);
  const double d = static_cast<double>(cov.dim());
  return gap / (1.0 + 2.0 * lambda * min_eig) + 2.0 * d * stability_constant(cov) / (lambda * lambda);
}

ExcessLossReport excess_loss_estimate(const ParametricParams& params, std::span<const GaussianTask> tasks,
                                      double lambda, std::size_t n_test, std::uint64_t seed) {
  require_centered(tasks, "excess_loss_estimate");
  if (n_test == 0) throw std::invalid_argument("excess_loss_estimate: n_test must be positive");
  ParametricParams p = params;
  p.lambda = lambda;
  std::vector<double> risk(tasks.size()), reference(tasks.size()), noise(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t k) {
    Stream rng(seed, StreamPurpose::Eval, k);
    risk[k] = loss(p, sample_points(tasks[k], 2 * n_test, rng));
    reference[k] = f_min(tasks[k], lambda);
    const double tr = trace(tasks[k].cov);
    noise[k] = lambda * (tr * tr + frob_sq(tasks[k].cov.matrix())) / static_cast<double>(n_test);
  });
  ExcessLossReport r;
  const double count = static_cast<double>(tasks.size());
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    r.risk += risk[k] / count;
    r.reference += reference[k] / count;
    r.sample_noise += noise[k] / count;
  }
  r.excess = r.risk - r.reference;
  r.n = n_test;
  return r;
}

double transport_map_error(const ParametricParams& params, std::span<const GaussianTask> tasks, std::size_t n_test,
                           std::uint64_t seed) {
  require_centered(tasks, "transport_map_error");
  if (n_test == 0) throw std::invalid_argument("transport_map_error: n_test must be positive");
  std::vector<double> err(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t k) {
    Stream rng(seed, StreamPurpose::Eval, k);
    const SymMatrix a = forward_matrix(params, sample_points(tasks[k], n_test, rng));
    err[k] = frob_sq(a.matrix() - tasks[k].cov_sqrt().matrix());
  });
  double total = 0.0;
  for (double e : err) total += e;
  return total / static_cast<double>(tasks.size());
}

std::string to_string(ErrorKind kind) { return kind == ErrorKind::ExcessLoss ? "excess_loss" : "map_error"; }

double FitResult::predict(double n) const { return a / std::sqrt(n) + b / n + c; }

std::string FitResult::model_string() const {
  std::ostringstream out;
  out.precision(17);
  out << to_string(kind) << " = " << a << "*n^(-1/2) + " << b << "*n^(-1) + " << c;
  return out.str();
}

FitResult fit_scaling_law(std::span<const ScalingPoint> points) {
  if (points.size() < 4) throw FitError("fit_scaling_law: need at least 4 points, got " + std::to_string(points.size()));
  std::set<double> seen;
  for (const ScalingPoint& p : points) {
    if (!(p.n >= 1.0) || !std::isfinite(p.error)) throw FitError("fit_scaling_law: need n >= 1 and finite errors");
    if (p.kind != points.front().kind) throw FitError("fit_scaling_law: points mix error kinds");
    if (!seen.insert(p.n).second) throw FitError("fit_scaling_law: duplicate n = " + std::to_string(p.n));
  }

  const std::size_t rows = points.size();
  constexpr std::size_t cols = 3;
  Matrix x(rows, cols);
  std::vector<double> y(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    x(i, 0) = 1.0 / std::sqrt(points[i].n);
    x(i, 1) = 1.0 / points[i].n;
    x(i, 2) = 1.0;
    y[i] = points[i].error;
  }

  // Householder QR, applied to y alongside.
  double scale = 0.0;
  for (double v : x.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t j = 0; j < cols; ++j) {
    double norm = 0.0;
    for (std::size_t i = j; i < rows; ++i) norm += x(i, j) * x(i, j);
    norm = std::sqrt(norm);
    if (norm <= 1e-10 * scale) throw FitError("fit_scaling_law: design matrix is rank deficient");
    const double alpha = x(j, j) > 0.0 ? -norm : norm;
    std::vector<double> v(rows - j);
    for (std::size_t i = j; i < rows; ++i) v[i - j] = x(i, j);
    v[0] -= alpha;
    double vv = 0.0;
    for (double e : v) vv += e * e;
    auto reflect = [&](auto&& at) {
      double dot = 0.0;
      for (std::size_t i = j; i < rows; ++i) dot += v[i - j] * at(i);
      const double f = 2.0 * dot / vv;
      for (std::size_t i = j; i < rows; ++i) at(i) -= f * v[i - j];
    };
    for (std::size_t k = j; k < cols; ++k) reflect([&](std::size_t i) -> double& { return x(i, k); });
    reflect([&](std::size_t i) -> double& { return y[i]; });
  }
  double beta[cols];
  for (std::size_t j = cols; j-- > 0;) {
    double s = y[j];
    for (std::size_t k = j + 1; k < cols; ++k) s -= x(j, k) * beta[k];
    beta[j] = s / x(j, j);
  }

  FitResult fit;
  fit.a = beta[0];
  fit.b = beta[1];
  fit.c = beta[2];
  fit.kind = points.front().kind;
  double mean = 0.0;
  for (const ScalingPoint& p : points) mean += p.error / static_cast<double>(rows);
  double ss_res = 0.0, ss_tot = 0.0;
  for (const ScalingPoint& p : points) {
    ss_res += std::pow(p.error - fit.predict(p.n), 2);
    ss_tot += std::pow(p.error - mean, 2);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity());
  return fit;
}

}  // namespace ictxot
