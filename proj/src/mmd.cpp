#include "ictxot/mmd.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ictxot/parallel.hpp"

namespace ictxot {

namespace {

constexpr std::size_t kRowChunk = 32;

double sq_dist(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double t = u[i] - v[i];
    s += t * t;
  }
  return s;
}

double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

void check_same_dim(const char* op, const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) {
    throw DimensionError(std::string(op) + ": point dimensions differ, " + x.shape_string() +
                         " vs " + y.shape_string());
  }
}

// Precomputed per-level factors so the inner loop is a handful of exps.
struct KernelEvaluator {
  const KernelSpec& spec;
  std::vector<double> inv_bw;
  std::vector<double> w;

  KernelEvaluator(const KernelSpec& s, double sigma0) : spec(s) {
    if (spec.kind == KernelKind::MultiScaleRBF) {
      for (int l = 0; l < spec.levels; ++l) {
        inv_bw.push_back(1.0 / spec.level_bandwidth(l, sigma0));
        w.push_back(spec.weight(l));
      }
    }
  }

  double operator()(std::span<const double> u, std::span<const double> v) const {
    if (spec.kind == KernelKind::Quadratic) {
      const double p = dot(u, v);
      return p * p;
    }
    const double r = sq_dist(u, v);
    double k = 0.0;
    for (std::size_t l = 0; l < w.size(); ++l) k += w[l] * std::exp(-r * inv_bw[l]);
    return k;
  }
};

}  // namespace

KernelSpec KernelSpec::quadratic() {
  KernelSpec s;
  s.kind = KernelKind::Quadratic;
  s.levels = 1;
  return s;
}

KernelSpec KernelSpec::multiscale_rbf(int levels) {
  KernelSpec s;
  s.kind = KernelKind::MultiScaleRBF;
  s.levels = levels;
  return s;
}

KernelSpec KernelSpec::multiscale_rbf_fixed(double sigma0, int levels) {
  KernelSpec s = multiscale_rbf(levels);
  s.bandwidth = BandwidthMode::Fixed;
  s.fixed_bandwidth = sigma0;
  return s;
}

void KernelSpec::validate() const {
  if (kind == KernelKind::Quadratic) return;
  if (levels < 1) throw std::invalid_argument("KernelSpec: levels must be >= 1");
  if (!weights.empty()) {
    if (weights.size() != static_cast<std::size_t>(levels)) {
      throw std::invalid_argument("KernelSpec: " + std::to_string(weights.size()) +
                                  " weights for " + std::to_string(levels) + " levels");
    }
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("KernelSpec: negative weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("KernelSpec: weights must sum to 1");
  }
  if (bandwidth == BandwidthMode::Fixed && !(fixed_bandwidth > 0.0)) {
    throw std::invalid_argument("KernelSpec: fixed bandwidth must be positive");
  }
}

double KernelSpec::weight(int l) const {
  if (weights.empty()) return 1.0 / static_cast<double>(levels);
  return weights[static_cast<std::size_t>(l)];
}

double KernelSpec::level_bandwidth(int l, double sigma0) const {
  // Levels are 1-based in the bandwidth formula.
  const int half = (levels + 1) / 2;  // ⌈L/2⌉
  return sigma0 * std::ldexp(1.0, (l + 1) - half);
}

double kernel_eval(const KernelSpec& spec, std::span<const double> u, std::span<const double> v,
                   double sigma0) {
  if (u.size() != v.size()) throw DimensionError("kernel_eval: vectors of different length");
  if (spec.kind == KernelKind::MultiScaleRBF && !(sigma0 > 0.0)) {
    throw std::invalid_argument("kernel_eval: RBF bandwidth must be positive");
  }
  return KernelEvaluator(spec, sigma0)(u, v);
}

Bandwidth adaptive_base_bandwidth(const Matrix& pred, const Matrix& truth) {
  check_same_dim("adaptive_base_bandwidth", pred, truth);
  const std::size_t p = pred.rows() + truth.rows();
  if (p < 2) throw DimensionError("adaptive_base_bandwidth: need at least 2 pooled points");
  const std::size_t d = pred.cols();

  auto pooled_row = [&](std::size_t i) {
    return i < pred.rows() ? pred.row_span(i) : truth.row_span(i - pred.rows());
  };

  bool all_equal = true;
  const auto first = pooled_row(0);
  for (std::size_t i = 1; i < p && all_equal; ++i) {
    const auto r = pooled_row(i);
    for (std::size_t c = 0; c < d; ++c)
      if (r[c] != first[c]) {
        all_equal = false;
        break;
      }
  }
  if (all_equal) return {1.0, true};

  // Σ_{i≠j}‖z_i - z_j‖² = 2P·Σ‖z_i - c‖² for any centre c; using the pooled
  // mean keeps the sum well conditioned.
  std::vector<double> centre(d, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    const auto r = pooled_row(i);
    for (std::size_t c = 0; c < d; ++c) centre[c] += r[c];
  }
  for (double& c : centre) c /= static_cast<double>(p);
  double spread = 0.0;
  for (std::size_t i = 0; i < p; ++i) spread += sq_dist(pooled_row(i), centre);
  const double pf = static_cast<double>(p);
  const double value = 2.0 * pf * spread / (pf * (pf - 1.0));
  if (!(value > 0.0)) return {1.0, true};
  return {value, false};
}

double resolve_bandwidth(const KernelSpec& spec, const Matrix& x, const Matrix& y) {
  if (spec.kind == KernelKind::Quadratic) return 1.0;
  if (spec.bandwidth == BandwidthMode::Fixed) return spec.fixed_bandwidth;
  return adaptive_base_bandwidth(x, y).value;
}

double mmd2_u(const Matrix& x, const Matrix& y, const KernelSpec& spec, double sigma0) {
  check_same_dim("mmd2_u", x, y);
  if (x.rows() != y.rows()) {
    throw DimensionError("mmd2_u: sets must have equal size, got " + x.shape_string() + " and " +
                         y.shape_string());
  }
  const std::size_t m = x.rows();
  if (m < 2) throw DimensionError("mmd2_u: need m >= 2 samples per set, got " + std::to_string(m));
  spec.validate();
  const KernelEvaluator k(spec, sigma0);

  const double total = deterministic_sum(m, kRowChunk, [&](std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const auto xi = x.row_span(i);
      const auto yi = y.row_span(i);
      for (std::size_t j = 0; j < m; ++j) {
        if (j == i) continue;
        const auto xj = x.row_span(j);
        const auto yj = y.row_span(j);
        s += k(xi, xj) + k(yi, yj) - k(xi, yj) - k(xj, yi);
      }
    }
    return s;
  });
  const double md = static_cast<double>(m);
  return total / (md * (md - 1.0));
}

double mmd2_u(const Matrix& x, const Matrix& y, const KernelSpec& spec) {
  return mmd2_u(x, y, spec, resolve_bandwidth(spec, x, y));
}

double mmd2_biased(const Matrix& x, const Matrix& y, const KernelSpec& spec, double sigma0) {
  check_same_dim("mmd2_biased", x, y);
  if (x.rows() == 0 || y.rows() == 0) throw DimensionError("mmd2_biased: empty sample set");
  spec.validate();
  const KernelEvaluator k(spec, sigma0);

  auto block = [&](const Matrix& a, const Matrix& b) {
    return deterministic_sum(a.rows(), kRowChunk, [&](std::size_t begin, std::size_t end) {
      double s = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        const auto ai = a.row_span(i);
        for (std::size_t j = 0; j < b.rows(); ++j) s += k(ai, b.row_span(j));
      }
      return s;
    });
  };
  const double mx = static_cast<double>(x.rows());
  const double my = static_cast<double>(y.rows());
  const double value = block(x, x) / (mx * mx) + block(y, y) / (my * my) - 2.0 * block(x, y) / (mx * my);
  // A V-statistic is a squared RKHS norm; only roundoff can push it below zero.
  return value < 0.0 ? 0.0 : value;
}

double mmd2_biased(const Matrix& x, const Matrix& y, const KernelSpec& spec) {
  return mmd2_biased(x, y, spec, resolve_bandwidth(spec, x, y));
}

double quadratic_mmd2_closed(const Matrix& x, const Matrix& y) {
  check_same_dim("quadratic_mmd2_closed", x, y);
  return frob_sq(second_moment(x) - second_moment(y));
}

}  // namespace ictxot
