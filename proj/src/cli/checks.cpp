#include "ictxot/checks.hpp"

#include <algorithm>

#include "ictxot/mmd.hpp"
#include "ictxot/parallel.hpp"
#include "ictxot/parametric.hpp"
#include "ictxot/theory.hpp"

namespace ictxot {

namespace {

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += std::log(x[i]) / static_cast<double>(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) my += std::log(y[i]) / static_cast<double>(y.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

}  // namespace

CheckResult check_minimizer_bound() {
  CheckResult r{"surrogate_minimizer_bound", true, Json::array()};
  for (double sigma : {0.5, 1.0, 2.0, 3.0}) {
    const double star = find_lambda_star(sigma);
    for (double lambda : {1e2, 1e3, 1e4}) {
      const SurrogateMin m = h_min_bruteforce({sigma, lambda});
      const double bound = std::abs(1.0 - sigma) / (sigma * sigma * lambda);
      const double dev = std::abs(m.argmin - sigma);
      bool ok = sigma == 1.0 ? (m.argmin == 1.0 && m.value == -1.0) : (lambda < star || dev <= bound);
      r.passed = r.passed && ok;
      r.details.push_back({{"sigma", sigma}, {"lambda", lambda}, {"lambda_star", star}, {"argmin", m.argmin},
                           {"deviation", dev}, {"bound", bound}, {"passed", ok}});
    }
  }
  return r;
}

CheckResult check_fmin_rate() {
  const SymMatrix cov = SymMatrix::diag(std::vector{2.0, 3.0});
  const double w2 = std::pow(1.0 - std::sqrt(2.0), 2) + std::pow(1.0 - std::sqrt(3.0), 2);
  std::vector<double> scaled;
  Json rows = Json::array();
  for (double lambda : {1e2, 1e3, 1e4}) {
    const double f = f_min(cov, lambda);
    scaled.push_back(lambda * std::abs(f - w2));
    rows.push_back({{"lambda", lambda}, {"f_min", f}, {"scaled_gap", scaled.back()}});
  }
  const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
  const double ratio = *hi / *lo;
  return {"fmin_w2_rate", *lo > 0.0 && ratio < 3.0,
          {{"w2", w2}, {"rows", rows}, {"max_over_min", ratio}, {"threshold", 3.0}}};
}

CheckResult check_construction(const CheckOptions& options) {
  constexpr double kMaxMeanError = 0.08;
  constexpr double kSlopeLo = -0.65, kSlopeHi = -0.35;
  constexpr std::size_t kSeeds = 20;
  const Matrix frame = rotation2d(0.4);
  const GaussianTask task = GaussianTask::from_frame({0.0, 0.0}, frame, {2.0, 3.0});
  ParametricParams params = oracle_params(frame, 0.02, 10.0);
  params.q = frame * options.construction_scale;
  params.c_theta = std::max(params.c_theta, frob_norm(params.q));
  const SymMatrix root = task.cov_sqrt();

  const std::vector<double> ns{1e2, 1e3, 1e4, 1e5};
  std::vector<double> mean_error;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    std::vector<double> err(kSeeds);
    parallel_for(kSeeds, [&](std::size_t s) {
      Stream rng(options.seed, StreamPurpose::Check, 1000 * i + s);
      const SymMatrix a = forward_matrix(params, sample_points(task, static_cast<std::size_t>(ns[i]), rng));
      err[s] = op_norm(SymMatrix::symmetrize(a.matrix() - root.matrix()));
    });
    double total = 0.0;
    for (double e : err) total += e;
    mean_error.push_back(total / kSeeds);
  }
  const double slope = loglog_slope(ns, mean_error);
  const bool ok = mean_error[2] <= kMaxMeanError && slope >= kSlopeLo && slope <= kSlopeHi;
  return {"construction_quality", ok,
          {{"n", ns}, {"mean_op_error", mean_error}, {"slope", slope}, {"max_mean_error_at_1e4", kMaxMeanError},
           {"slope_range", {kSlopeLo, kSlopeHi}}, {"q_scale", options.construction_scale}}};
}

CheckResult check_mmd_unbiased(const CheckOptions& options) {
  constexpr std::size_t kReps = 1000, kM = 200;
  const KernelSpec kernel = KernelSpec::quadratic();
  std::vector<double> values(kReps);
  parallel_for(kReps, [&](std::size_t r) {
    Stream rng(options.seed, StreamPurpose::Check, 1'000'000 + r);
    const Matrix x = sample_standard_normal(kM, 2, rng);
    Matrix y = sample_standard_normal(kM, 2, rng);
    y *= std::sqrt(2.0);
    values[r] = options.biased_mmd_as_unbiased ? mmd2_biased(x, y, kernel) : mmd2_u(x, y, kernel);
  });
  double mean = 0.0;
  for (double v : values) mean += v / kReps;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean) / (kReps - 1);
  const double se = std::sqrt(var / kReps);
  const double truth = 2.0;  // ‖I − 2I‖²_F in two dimensions
  const double z = std::abs(mean - truth) / se;
  return {"mmd_unbiasedness", z <= 3.0,
          {{"mean", mean}, {"standard_error", se}, {"truth", truth}, {"z", z}, {"threshold_se", 3.0},
           {"estimator", options.biased_mmd_as_unbiased ? "biased" : "unbiased"}}};
}

std::vector<CheckResult> run_theory_checks(const CheckOptions& options) {
  return {check_minimizer_bound(), check_fmin_rate(), check_construction(options), check_mmd_unbiased(options)};
}

}  // namespace ictxot
