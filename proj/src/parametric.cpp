#include "ictxot/parametric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ictxot/autodiff.hpp"

namespace ictxot {

namespace {

constexpr std::size_t kVerificationGrid = 10000;
constexpr int kMaxDoublings = 12;

Matrix first_rows(const Matrix& m, std::size_t begin, std::size_t count) {
  const auto first = m.data().begin() + static_cast<std::ptrdiff_t>(begin * m.cols());
  return Matrix(count, m.cols(), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * m.cols())));
}

void check_samples(const char* op, const ParametricParams& p, const Matrix& samples) {
  if (samples.cols() != p.dim()) {
    throw DimensionError(std::string(op) + ": samples " + samples.shape_string() + " for a " +
                         std::to_string(p.dim()) + "-dimensional model");
  }
}

std::size_t half_length(const char* op, const Matrix& samples) {
  if (samples.rows() == 0 || samples.rows() % 2 != 0) {
    throw DimensionError(std::string(op) + ": need an even, nonzero number of samples, got " +
                         std::to_string(samples.rows()));
  }
  return samples.rows() / 2;
}

}  // namespace

FeatureNet::FeatureNet(Matrix inner, std::vector<ReluUnit> units)
    : inner_(std::move(inner)), units_(std::move(units)) {
  if (inner_.rows() != inner_.cols()) throw DimensionError("FeatureNet: inner matrix is " + inner_.shape_string());
  compile();
}

void FeatureNet::compile() {
  struct Event {
    double at;
    double slope;
    double offset;
  };
  std::vector<Event> events;
  long double slope = 0.0L, offset = 0.0L;
  for (const ReluUnit& u : units_) {
    if (u.w > 0.0) {
      events.push_back({-u.b / u.w, u.c * u.w, u.c * u.b});
    } else if (u.w < 0.0) {
      // Active to the left of its breakpoint, so it is on at z → −∞.
      slope += u.c * u.w;
      offset += u.c * u.b;
      events.push_back({-u.b / u.w, -u.c * u.w, -u.c * u.b});
    } else {
      offset += u.c * std::max(u.b, 0.0);
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.at < b.at; });
  breaks_.clear();
  slope_.assign(1, static_cast<double>(slope));
  offset_.assign(1, static_cast<double>(offset));
  for (const Event& e : events) {
    slope += e.slope;
    offset += e.offset;
    breaks_.push_back(e.at);
    slope_.push_back(static_cast<double>(slope));
    offset_.push_back(static_cast<double>(offset));
  }
}

double FeatureNet::psi(double z) const {
  const auto j = static_cast<std::size_t>(std::lower_bound(breaks_.begin(), breaks_.end(), z) - breaks_.begin());
  return slope_[j] * z + offset_[j];
}

Matrix FeatureNet::features(const Matrix& samples) const {
  Matrix z = matmul_nt(samples, inner_);
  for (double& v : z.data()) v = psi(v);
  return z;
}

double FeatureNet::path_norm() const {
  double s = 0.0;
  for (const ReluUnit& u : units_) s += std::abs(u.c) * (std::abs(u.w) + std::abs(u.b));
  return s;
}

void ParametricParams::validate() const {
  const std::size_t d = q.rows();
  if (q.cols() != d || feature.inner().rows() != d || feature.inner().cols() != d) {
    throw DimensionError("ParametricParams: Q " + q.shape_string() + " and W " +
                         feature.inner().shape_string() + " must both be d×d");
  }
  if (!std::isfinite(lambda) || lambda < 0.0) throw std::invalid_argument("ParametricParams: lambda must be finite and >= 0");
  if (!(c_theta > 0.0)) throw std::invalid_argument("ParametricParams: C_theta must be positive");
  if (frob_norm(q) > c_theta + 1e-10) throw std::invalid_argument("ParametricParams: ||Q||_F exceeds C_theta");
  if (spectral_norm(feature.inner()) > c_theta + 1e-10) {
    throw std::invalid_argument("ParametricParams: ||W||_op exceeds C_theta");
  }
  if (feature.path_norm() > capacity + 1e-10) throw std::invalid_argument("ParametricParams: path norm exceeds M");
}

SymMatrix forward_matrix(const ParametricParams& params, const Matrix& target_samples) {
  check_samples("forward_matrix", params, target_samples);
  if (target_samples.rows() == 0) throw DimensionError("forward_matrix: need at least one sample");
  const Matrix moment = second_moment(params.feature.features(target_samples));
  return SymMatrix::symmetrize(matmul_nt(matmul(params.q, moment), params.q));
}

std::vector<double> predict(const ParametricParams& params, const Matrix& target_samples,
                            std::span<const double> query) {
  if (query.size() != params.dim()) throw DimensionError("predict: query length does not match model dimension");
  return matvec(forward_matrix(params, target_samples), query);
}

double loss(const ParametricParams& params, const Matrix& samples) {
  check_samples("loss", params, samples);
  const std::size_t n = half_length("loss", samples);
  const Matrix a = forward_matrix(params, first_rows(samples, 0, n)).matrix();
  const Matrix sigma_n = second_moment(first_rows(samples, n, n));
  const Matrix a2 = matmul(a, a);
  const double d = static_cast<double>(params.dim());
  return trace(a2) + d - 2.0 * trace(a) + params.lambda * frob_sq(a2 - sigma_n);
}

double empirical_risk(const ParametricParams& params, std::span<const Matrix> task_samples) {
  if (task_samples.empty()) throw std::invalid_argument("empirical_risk: need at least one task");
  double total = 0.0;
  for (const Matrix& s : task_samples) total += loss(params, s);
  return total / static_cast<double>(task_samples.size());
}

ParametricGradient grad_loss(const ParametricParams& params, const Matrix& samples) {
  check_samples("grad_loss", params, samples);
  const std::size_t n = half_length("grad_loss", samples);
  const std::size_t d = params.dim();
  const std::size_t m = params.feature.units().size();

  ad::Tape tape;
  const ad::Var q = tape.leaf(params.q);
  const ad::Var w_inner = tape.leaf(params.feature.inner());
  Matrix c(1, m), w(1, m), b(1, m);
  for (std::size_t k = 0; k < m; ++k) {
    const ReluUnit& u = params.feature.units()[k];
    c(0, k) = u.c;
    w(0, k) = u.w;
    b(0, k) = u.b;
  }
  const ad::Var cv = tape.leaf(std::move(c));
  const ad::Var wv = tape.leaf(std::move(w));
  const ad::Var bv = tape.leaf(std::move(b));

  const ad::Var y = tape.constant(first_rows(samples, 0, n));
  const ad::Var phi = ad::relu_expansion(ad::matmul_nt(y, w_inner), cv, wv, bv);
  const ad::Var moment = ad::scale(ad::matmul_tn(phi, phi), 1.0 / static_cast<double>(n));
  const ad::Var a = ad::symmetrize(ad::matmul_nt(ad::matmul(q, moment), q));
  const ad::Var a2 = ad::matmul(a, a);
  const ad::Var sigma_n = tape.constant(second_moment(first_rows(samples, n, n)));
  const ad::Var transport =
      ad::add(ad::sub(ad::trace(a2), ad::scale(ad::trace(a), 2.0)), tape.constant(static_cast<double>(d)));
  const ad::Var total = ad::add(transport, ad::scale(ad::frob_sq(ad::sub(a2, sigma_n)), params.lambda));
  tape.backward(total);

  ParametricGradient g;
  g.loss = total.scalar();
  g.transport = transport.scalar();
  g.q = q.grad();
  g.inner = w_inner.grad();
  g.units.resize(m);
  for (std::size_t k = 0; k < m; ++k) g.units[k] = {cv.grad()(0, k), wv.grad()(0, k), bv.grad()(0, k)};
  g.relu_margin = tape.min_relu_margin();
  return g;
}

void project_to_class(ParametricParams& params) {
  const double qn = frob_norm(params.q);
  if (qn > params.c_theta) params.q *= params.c_theta / qn;
  Matrix inner = params.feature.inner();
  const double wn = spectral_norm(inner);
  std::vector<ReluUnit> units = params.feature.units();
  bool rebuild = false;
  if (wn > params.c_theta) {
    inner *= params.c_theta / wn;
    rebuild = true;
  }
  const double path = params.feature.path_norm();
  if (path > params.capacity) {
    const double s = params.capacity / path;
    for (ReluUnit& u : units) u.c *= s;
    rebuild = true;
  }
  if (rebuild) params.feature = FeatureNet(std::move(inner), std::move(units));
}

std::vector<double> pack(const ParametricParams& params) {
  std::vector<double> flat = params.q.data();
  const auto& w = params.feature.inner().data();
  flat.insert(flat.end(), w.begin(), w.end());
  for (const ReluUnit& u : params.feature.units()) flat.push_back(u.c);
  for (const ReluUnit& u : params.feature.units()) flat.push_back(u.w);
  for (const ReluUnit& u : params.feature.units()) flat.push_back(u.b);
  return flat;
}

ParametricParams unpack(const ParametricParams& like, std::span<const double> flat) {
  const std::size_t d = like.dim();
  const std::size_t m = like.feature.units().size();
  if (flat.size() != 2 * d * d + 3 * m) {
    throw DimensionError("unpack: expected " + std::to_string(2 * d * d + 3 * m) + " values, got " +
                         std::to_string(flat.size()));
  }
  ParametricParams p = like;
  p.q = Matrix(d, d, std::vector<double>(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(d * d)));
  Matrix inner(d, d, std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(d * d),
                                         flat.begin() + static_cast<std::ptrdiff_t>(2 * d * d)));
  std::vector<ReluUnit> units(m);
  const std::size_t base = 2 * d * d;
  for (std::size_t k = 0; k < m; ++k) units[k] = {flat[base + k], flat[base + m + k], flat[base + 2 * m + k]};
  p.feature = FeatureNet(std::move(inner), std::move(units));
  return p;
}

double g_sq(double z) { return std::copysign(std::sqrt(std::abs(z)), z); }

double g_eps(double z, double delta) {
  if (std::abs(z) > delta) return g_sq(z);
  return z / std::sqrt(delta);
}

GsqNetwork build_gsq_network(double eps, double radius, double capacity) {
  if (!(eps > 0.0) || !(eps < radius)) throw std::invalid_argument("build_gsq_network: need 0 < eps < r");
  const double delta = eps * eps;

  std::size_t cells = static_cast<std::size_t>(std::ceil(4.0 * radius / eps));
  for (int attempt = 0; attempt <= kMaxDoublings; ++attempt, cells *= 2) {
    const double h = radius / static_cast<double>(cells);
    // Knot values and the slope of each cell; unit k switches slope at t_k.
    std::vector<double> slope(cells);
    for (std::size_t k = 0; k < cells; ++k) {
      const double t0 = h * static_cast<double>(k), t1 = h * static_cast<double>(k + 1);
      slope[k] = (g_eps(t1, delta) - g_eps(t0, delta)) / h;
    }
    GsqNetwork net;
    net.knots = cells;
    net.units.reserve(2 * cells);
    for (std::size_t k = 0; k < cells; ++k) {
      const double jump = k == 0 ? slope[0] : slope[k] - slope[k - 1];
      const double t = h * static_cast<double>(k);
      // The pair (β, 1, −t), (−β, −1, −t) makes ψ odd with ψ(0) = 0.
      net.units.push_back({jump, 1.0, -t});
      net.units.push_back({-jump, -1.0, -t});
      net.path_norm += 2.0 * std::abs(jump) * (1.0 + t);
    }
    const FeatureNet probe(Matrix::identity(1), net.units);
    for (std::size_t i = 0; i < kVerificationGrid; ++i) {
      const double z = -radius + 2.0 * radius * static_cast<double>(i) / static_cast<double>(kVerificationGrid - 1);
      net.grid_error = std::max(net.grid_error, std::abs(probe.psi(z) - g_sq(z)));
    }
    if (net.grid_error <= eps) {
      if (net.path_norm > capacity) {
        throw CapacityError("build_gsq_network: eps=" + std::to_string(eps) + " needs path norm " +
                                std::to_string(net.path_norm) + " but M=" + std::to_string(capacity),
                            net.path_norm);
      }
      return net;
    }
  }
  throw std::runtime_error("build_gsq_network: grid error did not reach eps after refinement");
}

ParametricParams oracle_params(const Matrix& frame, double eps, double radius, double lambda, double capacity) {
  if (!is_orthogonal(frame, 1e-10)) throw std::invalid_argument("oracle_params: frame is not orthogonal");
  const std::size_t d = frame.rows();
  GsqNetwork net = build_gsq_network(eps, radius, capacity);
  ParametricParams p;
  p.q = frame * std::pow(std::numbers::pi / 2.0, 0.25);
  p.feature = FeatureNet(frame.transposed(), std::move(net.units));
  p.lambda = lambda;
  p.c_theta = std::max(std::sqrt(static_cast<double>(d)), frob_norm(p.q));
  p.capacity = capacity;
  return p;
}

ParametricParams init_params(std::size_t dim, std::size_t units, double lambda, double capacity, Stream& rng) {
  if (dim == 0 || units == 0) throw std::invalid_argument("init_params: dim and units must be positive");
  ParametricParams p;
  p.q = Matrix::identity(dim);
  Matrix inner = Matrix::identity(dim);
  for (double& v : p.q.data()) v += 0.1 * rng.normal();
  for (double& v : inner.data()) v += 0.1 * rng.normal();
  std::vector<ReluUnit> list(units);
  const double c_scale = 1.0 / std::sqrt(static_cast<double>(units));
  for (ReluUnit& u : list) u = {c_scale * rng.normal(), rng.normal(), rng.normal()};
  p.feature = FeatureNet(std::move(inner), std::move(list));
  p.lambda = lambda;
  p.c_theta = std::sqrt(static_cast<double>(dim));
  p.capacity = capacity;
  project_to_class(p);
  return p;
}

}  // namespace ictxot
