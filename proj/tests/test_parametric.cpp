#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "ictxot/autodiff.hpp"
#include "ictxot/parametric.hpp"
#include "ictxot/tasks.hpp"

using namespace ictxot;
using ictxot::testing::random_matrix;

namespace {

// ψ(z) = a·z from the pair relu(z) − relu(−z).
std::vector<ReluUnit> linear_units(double a = 1.0) { return {{a, 1.0, 0.0}, {-a, -1.0, 0.0}}; }

ParametricParams make_params(Matrix q, Matrix w, std::vector<ReluUnit> units, double lambda) {
  ParametricParams p;
  p.q = std::move(q);
  p.feature = FeatureNet(std::move(w), std::move(units));
  p.lambda = lambda;
  p.c_theta = 1e6;
  p.capacity = 1e6;
  return p;
}

ParametricParams random_params(std::size_t d, std::size_t m, double lambda, Stream& rng) {
  std::vector<ReluUnit> units(m);
  for (auto& u : units) u = {rng.normal(), rng.normal(), rng.normal()};
  return make_params(random_matrix(d, d, rng, 0.6), random_matrix(d, d, rng, 0.8), units, lambda);
}

Matrix rows_of(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(count, m.cols());
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(begin + r, c);
  return out;
}

Matrix sqrt_of(const Matrix& frame, std::vector<double> eig) {
  for (double& e : eig) e = std::sqrt(e);
  return matmul(matmul(frame, Matrix::diag(eig)), frame.transposed());
}

}  // namespace

TEST(FeatureNet, CompiledPsiMatchesUnitSum) {
  Stream rng(50, StreamPurpose::Check);
  std::vector<ReluUnit> units(40);
  for (auto& u : units) u = {rng.normal(), rng.normal(), rng.normal()};
  units[3].w = 0.0;  // a constant unit
  const FeatureNet net(Matrix::identity(1), units);
  for (int i = 0; i < 500; ++i) {
    const double z = rng.uniform(-6, 6);
    double direct = 0;
    for (const auto& u : units) direct += u.c * std::max(0.0, u.w * z + u.b);
    EXPECT_NEAR(net.psi(z), direct, 1e-12);
  }
  double pn = 0;
  for (const auto& u : units) pn += std::abs(u.c) * (std::abs(u.w) + std::abs(u.b));
  EXPECT_DOUBLE_EQ(net.path_norm(), pn);
}

TEST(ForwardMatrix, RankOneOuterProduct) {
  const auto p = make_params(Matrix::identity(2), Matrix::identity(2), linear_units(), 0.0);
  const Matrix y{{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}};
  EXPECT_EQ(forward_matrix(p, y).matrix(), (Matrix{{1.0, 0.0}, {0.0, 0.0}}));
}

TEST(ForwardMatrix, LinearPsiClosedForm) {
  Stream rng(51, StreamPurpose::Check);
  const Matrix q = random_matrix(3, 3, rng), w = random_matrix(3, 3, rng);
  const auto p = make_params(q, w, linear_units(), 0.0);
  const Matrix y = random_matrix(25, 3, rng);
  Matrix c(3, 3);
  for (std::size_t i = 0; i < 25; ++i)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) c(a, b) += y(i, a) * y(i, b) / 25.0;
  const Matrix qw = matmul(q, w);
  const Matrix expected = matmul(matmul(qw, c), qw.transposed());
  EXPECT_LT(max_abs(forward_matrix(p, y).matrix() - expected), 1e-12);
}

TEST(ForwardMatrix, SymmetricPsdAndPermutationInvariant) {
  Stream rng(52, StreamPurpose::Check);
  for (int rep = 0; rep < 30; ++rep) {
    const auto p = random_params(3, 7, 0.0, rng);
    const Matrix y = random_matrix(40, 3, rng, 2.0);
    const SymMatrix a = forward_matrix(p, y);
    EXPECT_GE(sym_eig(a).values.front(), -1e-12 * (1 + op_norm(a)));
    Matrix rev(40, 3);
    for (std::size_t i = 0; i < 40; ++i)
      for (std::size_t c = 0; c < 3; ++c) rev(i, c) = y(39 - i, c);
    EXPECT_LT(max_abs(forward_matrix(p, rev).matrix() - a.matrix()), 1e-12 * (1 + max_abs(a.matrix())));
  }
}

TEST(Predict, IdentityAndLinearity) {
  const auto p = make_params(Matrix::identity(2), Matrix::identity(2), linear_units(), 0.0);
  const Matrix y{{1.0, 1.0}, {1.0, -1.0}};  // second moment exactly I
  const std::vector<double> x{0.3, -0.8};
  EXPECT_EQ(predict(p, y, x), x);
  Stream rng(53, StreamPurpose::Check);
  const auto r = random_params(2, 5, 0.0, rng);
  const Matrix ys = random_matrix(10, 2, rng);
  const auto one = predict(r, ys, x);
  const std::vector<double> x2{0.6, -1.6};
  const auto two = predict(r, ys, x2);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(two[i], 2 * one[i], 1e-12);
}

TEST(Predict, OraclePushforward) {
  const Matrix frame = rotation2d(0.4);
  const auto task = GaussianTask::from_frame({0, 0}, frame, {2.0, 3.0});
  Stream rng(54, StreamPurpose::Check);
  const Matrix y = sample_points(task, 5000, rng);
  const auto p = oracle_params(frame, 0.02, 10.0);
  const Matrix root = sqrt_of(frame, {2.0, 3.0});
  const std::vector<double> x{1.0, -0.5};
  const auto got = predict(p, y, x);
  const auto want = matvec(root, x);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(got[i], want[i], 0.1);
}

TEST(Loss, ZeroAtIdentityWithIdentitySecondMoment) {
  const auto p = make_params(Matrix::identity(2), Matrix::identity(2), linear_units(), 5.0);
  const Matrix y{{1.0, 1.0}, {1.0, -1.0}, {1.0, 1.0}, {1.0, -1.0}};
  EXPECT_NEAR(loss(p, y), 0.0, 1e-14);
}

TEST(Loss, ZeroFeatureNet) {
  Stream rng(55, StreamPurpose::Check);
  auto units = linear_units(0.0);
  const auto p = make_params(random_matrix(2, 2, rng), Matrix::identity(2), units, 7.0);
  const Matrix y = random_matrix(20, 2, rng);
  const Matrix sn = second_moment(rows_of(y, 10, 10));
  EXPECT_NEAR(loss(p, y), 2.0 + 7.0 * frob_sq(sn), 1e-12);
}

TEST(Loss, OddCountIsSizeError) {
  const auto p = make_params(Matrix::identity(2), Matrix::identity(2), linear_units(), 0.0);
  EXPECT_THROW(loss(p, Matrix(5, 2)), DimensionError);
  EXPECT_THROW(grad_loss(p, Matrix(3, 2)), DimensionError);
}

TEST(Loss, ClosedFormQueryTermMatchesMonteCarlo) {
  Stream rng(56, StreamPurpose::Check);
  const auto p = random_params(2, 6, 3.0, rng);
  const Matrix y = random_matrix(30, 2, rng, 1.2);
  const Matrix a = forward_matrix(p, rows_of(y, 0, 15)).matrix();
  const Matrix sn = second_moment(rows_of(y, 15, 15));
  const Matrix a2 = matmul(a, a);
  const double penalty = 3.0 * frob_sq(a2 - sn);
  const std::size_t draws = 100000;
  const Matrix x = random_matrix(draws, 2, rng);
  const Matrix ax = matmul_nt(x, a);
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double c = std::pow(ax(i, 0) - x(i, 0), 2) + std::pow(ax(i, 1) - x(i, 1), 2);
    s += c;
    s2 += c * c;
  }
  const double mean = s / draws, se = std::sqrt((s2 / draws - mean * mean) / draws);
  EXPECT_LT(std::abs(loss(p, y) - (mean + penalty)), 3 * se);
}

TEST(Loss, NonNegativeProperty) {
  Stream rng(57, StreamPurpose::Check);
  for (int rep = 0; rep < 100; ++rep) {
    const auto p = random_params(2, 4, rng.uniform(0, 10), rng);
    EXPECT_GE(loss(p, random_matrix(12, 2, rng)), 0.0);
  }
}

TEST(EmpiricalRisk, MeanOfLosses) {
  Stream rng(58, StreamPurpose::Check);
  const auto p = random_params(2, 5, 2.0, rng);
  std::vector<Matrix> sets{random_matrix(10, 2, rng), random_matrix(14, 2, rng), random_matrix(8, 2, rng)};
  EXPECT_EQ(empirical_risk(p, std::span(sets.data(), 1)), loss(p, sets[0]));
  const double three = empirical_risk(p, sets);
  EXPECT_NEAR(three, (loss(p, sets[0]) + loss(p, sets[1]) + loss(p, sets[2])) / 3.0, 1e-12);
  std::vector<Matrix> doubled = sets;
  doubled.insert(doubled.end(), sets.begin(), sets.end());
  EXPECT_NEAR(empirical_risk(p, doubled), three, 1e-12);
  EXPECT_THROW(empirical_risk(p, std::span<const Matrix>{}), std::invalid_argument);
}

TEST(SquareRoot, Values) {
  EXPECT_EQ(g_sq(4.0), 2.0);
  EXPECT_EQ(g_sq(-9.0), -3.0);
  EXPECT_EQ(g_eps(0.0, 0.1), 0.0);
  for (double e : {0.01, 0.1, 1.0}) {
    EXPECT_NEAR(g_eps(e, e), g_sq(e), 1e-15);
    EXPECT_NEAR(g_eps(-e, e), g_sq(-e), 1e-15);
    EXPECT_NEAR(g_eps(e * (1 + 1e-9), e), g_eps(e * (1 - 1e-9), e), 1e-8);
  }
}

TEST(SquareRoot, GapBoundOnGrid) {
  for (double e : {1e-4, 0.01, 0.3, 2.0}) {
    double sup = 0;
    for (int i = 0; i <= 100000; ++i) {
      const double z = -e + 2 * e * i / 100000.0;
      sup = std::max(sup, std::abs(g_sq(z) - g_eps(z, e)));
    }
    EXPECT_LE(sup, std::sqrt(e) / 4 * (1 + 1e-12));
    EXPECT_GE(sup, std::sqrt(e) / 4 * 0.999);  // the bound is attained at z = ε/4
  }
}

TEST(GsqNetwork, OddAccurateAndMeasured) {
  const GsqNetwork net = build_gsq_network(0.05, 10.0);
  const FeatureNet psi(Matrix::identity(1), net.units);
  EXPECT_NEAR(psi.psi(0.0), 0.0, 1e-12);
  EXPECT_LE(net.grid_error, 0.05);
  EXPECT_NEAR(psi.psi(10.0), std::sqrt(10.0), 0.05);
  EXPECT_NEAR(psi.psi(-10.0), -std::sqrt(10.0), 0.05);
  EXPECT_NEAR(psi.path_norm(), net.path_norm, 1e-9 * net.path_norm);
  // Independent sup check on a denser grid of [−r, r].
  double sup = 0;
  for (int i = 0; i <= 200000; ++i) {
    const double z = -10.0 + 20.0 * i / 200000.0;
    sup = std::max(sup, std::abs(psi.psi(z) - g_sq(z)));
  }
  EXPECT_LE(sup, 0.05);
}

TEST(GsqNetwork, CapacityErrorReportsRequiredNorm) {
  const double need = build_gsq_network(0.02, 10.0).path_norm;
  try {
    (void)build_gsq_network(0.02, 10.0, need / 2);
    FAIL();
  } catch (const CapacityError& e) {
    EXPECT_DOUBLE_EQ(e.required(), need);
  }
  EXPECT_THROW(build_gsq_network(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(build_gsq_network(2.0, 1.0), std::invalid_argument);
}

TEST(Oracle, OneDimensionalScale) {
  const auto task = GaussianTask::from_frame({0.0}, Matrix::identity(1), {2.5});
  Stream rng(59, StreamPurpose::Check);
  const auto p = oracle_params(Matrix::identity(1), 0.02, 10.0);
  EXPECT_NO_THROW(p.validate());
  const SymMatrix a = forward_matrix(p, sample_points(task, 100000, rng));
  EXPECT_NEAR(a(0, 0), std::sqrt(2.5), 0.05);
}

TEST(Oracle, IsotropicSanity) {
  const auto task = GaussianTask::from_frame({0.0, 0.0}, Matrix::identity(2), {1.0, 1.0});
  Stream rng(60, StreamPurpose::Check);
  const auto p = oracle_params(rotation2d(1.0), 0.02, 10.0);
  const SymMatrix a = forward_matrix(p, sample_points(task, 100000, rng));
  EXPECT_LT(op_norm(SymMatrix::symmetrize(a.matrix() - Matrix::identity(2))), 0.03);
}

TEST(Oracle, ChangeOfVariablesCovariance) {
  // z = (π/2)^{1/4}·g_sq(Uᵀy) has covariance Λ^{1/2} when y ~ N(0, UΛUᵀ).
  const Matrix frame = rotation2d(0.4);
  const auto task = GaussianTask::from_frame({0, 0}, frame, {2.0, 3.0});
  Stream rng(61, StreamPurpose::Check);
  const std::size_t n = 1000000;
  const Matrix y = sample_points(task, n, rng);
  const double c = std::pow(std::numbers::pi / 2.0, 0.25);
  Matrix z = matmul(y, frame);  // rows Uᵀyᵢ
  for (double& v : z.data()) v = c * g_sq(v);
  const Matrix cov = second_moment(z);
  EXPECT_NEAR(cov(0, 0), std::sqrt(2.0), 0.02);
  EXPECT_NEAR(cov(1, 1), std::sqrt(3.0), 0.02);
  EXPECT_NEAR(cov(0, 1), 0.0, 0.02);
}

TEST(GradLoss, MatchesFiniteDifferences) {
  Stream rng(62, StreamPurpose::Check);
  int checked = 0;
  while (checked < 20) {
    const double lambda = std::vector<double>{0.0, 1.0, 1000.0}[checked % 3];
    const auto p = random_params(2, 6, lambda, rng);
    const Matrix y = random_matrix(16, 2, rng);
    const ParametricGradient g = grad_loss(p, y);
    if (g.relu_margin < 1e-3) continue;
    ++checked;
    std::vector<double> flat_grad = g.q.data();
    flat_grad.insert(flat_grad.end(), g.inner.data().begin(), g.inner.data().end());
    for (const auto& u : g.units) flat_grad.push_back(u.c);
    for (const auto& u : g.units) flat_grad.push_back(u.w);
    for (const auto& u : g.units) flat_grad.push_back(u.b);
    const auto report = ad::finite_diff_check([&](std::span<const double> x) { return loss(unpack(p, x), y); },
                                              flat_grad, pack(p), 1e-5);
    EXPECT_LT(report.max_rel_error, 1e-5) << "lambda " << lambda << " index " << report.worst_index;
    EXPECT_NEAR(g.loss, loss(p, y), 1e-10 * std::max(1.0, g.loss));
  }
}

TEST(GradLoss, ZeroAtOneDimensionalMinimizer) {
  // λ = 0, d = 1, ψ(z) = a·z: A = q²a²w²·mean(y²) and the loss (A − 1)² is
  // stationary at A = 1.
  const Matrix y{{0.5}, {-1.5}, {2.0}, {1.0}, {-0.3}, {0.7}};
  const double m2 = (0.25 + 2.25 + 4.0) / 3.0;
  const auto p = make_params(Matrix{{1.0}}, Matrix{{1.0}}, linear_units(1.0 / std::sqrt(m2)), 0.0);
  const ParametricGradient g = grad_loss(p, y);
  EXPECT_NEAR(g.loss, 0.0, 1e-14);
  EXPECT_NEAR(g.q(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(g.inner(0, 0), 0.0, 1e-12);
  for (const auto& u : g.units) {
    EXPECT_NEAR(u.c, 0.0, 1e-12);
    EXPECT_NEAR(u.w, 0.0, 1e-12);
    EXPECT_NEAR(u.b, 0.0, 1e-12);
  }
}

TEST(GradLoss, SilentUnitMatchesMatrixCalculus) {
  // For a unit with c = 0: ∂/∂w = ∂/∂b = 0 and ∂/∂c = ⟨∂L/∂Φ, relu(wZ + b)⟩ with
  // ∂L/∂Φ = (2/n)·Φ·QᵀG_AQ and G_A = 2A − 2I + 2λ(AR + RA), R = A² − Σₙ.
  Stream rng(63, StreamPurpose::Check);
  auto p = random_params(2, 4, 2.5, rng);
  std::vector<ReluUnit> units = p.feature.units();
  units.push_back({0.0, 0.7, -0.2});
  p.feature = FeatureNet(p.feature.inner(), units);
  const Matrix y = random_matrix(20, 2, rng);
  const std::size_t n = 10;
  const Matrix yA = rows_of(y, 0, n);
  const Matrix phi = p.feature.features(yA);
  const Matrix a = forward_matrix(p, yA).matrix();
  const Matrix r = matmul(a, a) - second_moment(rows_of(y, n, n));
  const Matrix ga = (a - Matrix::identity(2)) * 2.0 + (matmul(a, r) + matmul(r, a)) * (2.0 * p.lambda);
  const Matrix gc = matmul(matmul(p.q.transposed(), ga), p.q);
  const Matrix gphi = matmul(phi, gc) * (2.0 / n);
  const Matrix z = matmul_nt(yA, p.feature.inner());
  double expected = 0;
  for (std::size_t i = 0; i < z.size(); ++i) expected += gphi.data()[i] * std::max(0.0, 0.7 * z.data()[i] - 0.2);
  const ParametricGradient g = grad_loss(p, y);
  EXPECT_NEAR(g.units.back().c, expected, 1e-10 * std::max(1.0, std::abs(expected)));
  EXPECT_EQ(g.units.back().w, 0.0);
  EXPECT_EQ(g.units.back().b, 0.0);
}

TEST(GradLoss, PermutationInvariant) {
  Stream rng(64, StreamPurpose::Check);
  const auto p = random_params(2, 5, 4.0, rng);
  const Matrix y = random_matrix(12, 2, rng);
  Matrix perm = y;
  // Swap two rows inside each half.
  for (std::size_t c = 0; c < 2; ++c) {
    std::swap(perm(0, c), perm(4, c));
    std::swap(perm(7, c), perm(11, c));
  }
  const auto g1 = grad_loss(p, y), g2 = grad_loss(p, perm);
  EXPECT_NEAR(g1.loss, g2.loss, 1e-12 * g1.loss);
  EXPECT_LT(max_abs(g1.q - g2.q), 1e-12 * (1 + max_abs(g1.q)));
}

TEST(Projection, EnforcesAllBounds) {
  Stream rng(65, StreamPurpose::Check);
  auto p = random_params(3, 8, 1.0, rng);
  p.q *= 10.0;
  p.c_theta = std::sqrt(3.0);
  p.capacity = 0.5;
  p.feature = FeatureNet(p.feature.inner() * 10.0, p.feature.units());
  project_to_class(p);
  EXPECT_LE(frob_norm(p.q), p.c_theta + 1e-10);
  EXPECT_LE(spectral_norm(p.feature.inner()), p.c_theta + 1e-10);
  EXPECT_LE(p.feature.path_norm(), p.capacity + 1e-10);
  EXPECT_NO_THROW(p.validate());
}

TEST(Pack, RoundTrip) {
  Stream rng(66, StreamPurpose::Check);
  const auto p = random_params(3, 4, 1.0, rng);
  const auto back = unpack(p, pack(p));
  EXPECT_EQ(back.q, p.q);
  EXPECT_EQ(back.feature.inner(), p.feature.inner());
  EXPECT_EQ(back.feature.units(), p.feature.units());
  EXPECT_THROW(unpack(p, std::vector<double>(3)), DimensionError);
}

TEST(InitParams, InsideClass) {
  Stream rng(67, StreamPurpose::Init);
  const auto p = init_params(2, 16, 1000.0, 10.0, rng);
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.feature.units().size(), 16u);
}
