#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "ictxot/trainer.hpp"

using namespace ictxot;

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_DOUBLE_EQ(c.base_lr, 3e-5);
  EXPECT_EQ(c.epochs, 1000u);
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.base_lr = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Adam, FirstStepScalarHandTrace) {
  // m = 0.1g, v = 0.001g²; bias correction gives m̂ = g, v̂ = g².
  TrainConfig c;
  const double g = -0.37, lr = 0.05;
  std::vector<double> p{1.5};
  AdamState s(1);
  adam_step(p, s, std::vector<double>{g}, lr, c);
  EXPECT_NEAR(p[0], 1.5 - lr * g / (std::abs(g) + 1e-8), 1e-15);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, SecondStepHandTrace) {
  TrainConfig c;
  std::vector<double> p{0.0};
  AdamState s(1);
  adam_step(p, s, std::vector<double>{2.0}, 0.1, c);
  adam_step(p, s, std::vector<double>{-1.0}, 0.1, c);
  const double m = 0.9 * 0.2 + 0.1 * -1.0;
  const double v = 0.999 * 0.004 + 0.001 * 1.0;
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p[0], -0.1 * (2.0 / (2.0 + 1e-8)) - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-14);
}

TEST(Adam, ConstantGradientAndZeroGradient) {
  TrainConfig c;
  std::vector<double> p{0.0, 0.0, 3.0};
  AdamState s(3);
  for (int i = 0; i < 100; ++i) adam_step(p, s, std::vector<double>{0.5, -2.0, 0.0}, 1e-3, c);
  EXPECT_LT(p[0], 0.0);
  EXPECT_GT(p[1], 0.0);
  EXPECT_EQ(p[2], 3.0);
  EXPECT_THROW(adam_step(p, s, std::vector<double>{1.0}, 1e-3, c), DimensionError);
}

TEST(CosineLr, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 0.3), 0.3);
  EXPECT_NEAR(cosine_lr(100, 100, 0.3), 0.0, 1e-17);
  EXPECT_NEAR(cosine_lr(50, 100, 0.3), 0.15, 1e-16);
  EXPECT_THROW(cosine_lr(101, 100, 0.3), std::invalid_argument);
  for (std::size_t t = 1; t <= 100; ++t) EXPECT_LE(cosine_lr(t, 100, 1.0), cosine_lr(t - 1, 100, 1.0));
}

TEST(Train, QuadraticBowlAndHistory) {
  TrainConfig c;
  c.base_lr = 0.1;
  c.epochs = 400;
  // Task k pulls toward k; the average objective is minimized at the mean 1.
  auto objective = [](std::span<const double> p, std::size_t task) {
    const double diff = p[0] - static_cast<double>(task);
    return TaskStep{diff * diff, diff * diff, 0.0, {2.0 * diff}};
  };
  const TrainResult r = train({5.0}, 3, c, objective);
  ASSERT_FALSE(r.aborted);
  ASSERT_EQ(r.history.size(), 400u);
  EXPECT_DOUBLE_EQ(r.history.front().lr, 0.1);
  EXPECT_NEAR(r.params[0], 1.0, 1e-3);
  EXPECT_LT(r.history.back().risk, r.history.front().risk);
}

TEST(Train, NonFiniteLossAbortsWithLastGood) {
  TrainConfig c;
  c.base_lr = 0.1;
  c.epochs = 10;
  int calls = 0;
  std::vector<double> seen;
  auto objective = [&](std::span<const double> p, std::size_t) {
    ++calls;
    seen.assign(p.begin(), p.end());
    const double loss = calls == 4 ? std::numeric_limits<double>::quiet_NaN() : p[0] * p[0];
    return TaskStep{loss, loss, 0.0, {2.0 * p[0]}};
  };
  const TrainResult r = train({1.0}, 2, c, objective);
  EXPECT_TRUE(r.aborted);
  EXPECT_EQ(calls, 4);
  EXPECT_EQ(r.params, seen);
  EXPECT_EQ(r.history.size(), 1u);
}

TEST(Train, ShuffleIsSeededAndFixedOrderByDefault) {
  TrainConfig c;
  c.epochs = 3;
  std::vector<std::size_t> order;
  auto objective = [&](std::span<const double>, std::size_t task) {
    order.push_back(task);
    return TaskStep{0.0, 0.0, 0.0, {0.0}};
  };
  train({0.0}, 5, c, objective);
  EXPECT_EQ(order, (std::vector<std::size_t>{0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0, 1, 2, 3, 4}));
  c.shuffle = true;
  c.seed = 9;
  order.clear();
  train({0.0}, 5, c, objective);
  const auto first = order;
  order.clear();
  train({0.0}, 5, c, objective);
  EXPECT_EQ(order, first);
  EXPECT_THROW(train({0.0}, 0, c, objective), std::invalid_argument);
}

namespace {

// ψ(z) = relu(z) − relu(−z) = z, so A = q²w²·mean(y²) in one dimension.
ParametricParams linear_1d(double q, double w) {
  ParametricParams p;
  p.q = Matrix{{q}};
  p.feature = FeatureNet(Matrix{{w}}, {{1.0, 1.0, 0.0}, {-1.0, -1.0, 0.0}});
  p.c_theta = 10.0;
  p.capacity = 100.0;
  return p;
}

}  // namespace

TEST(TrainParametric, OneTaskLinearConvergesToMinimizer) {
  Stream rng(90, StreamPurpose::Check);
  Matrix samples(400, 1);
  for (double& v : samples.data()) v = std::sqrt(2.0) * rng.normal();
  TrainConfig c;
  c.base_lr = 0.01;
  c.epochs = 3000;
  c.lambda = 0.0;
  const std::vector<Matrix> tasks{samples};
  const auto r = train_parametric(linear_1d(0.6, 0.8), tasks, c);
  ASSERT_FALSE(r.aborted);
  // λ = 0: loss = (A − 1)², minimized at A = 1 with value 0.
  const Matrix first_half(200, 1, std::vector<double>(samples.data().begin(), samples.data().begin() + 200));
  const double a = forward_matrix(r.params, first_half).matrix()(0, 0);
  EXPECT_NEAR(a, 1.0, 1e-3);
  EXPECT_LT(r.history.back().risk, 1e-6);
}

TEST(TrainParametric, ProjectionKeepsParamsInClass) {
  Stream rng(91, StreamPurpose::Init);
  ParametricParams init = init_params(2, 8, 10.0, 5.0, rng);
  std::vector<Matrix> tasks;
  for (int k = 0; k < 3; ++k) tasks.push_back(ictxot::testing::random_matrix(40, 2, rng, 1.5));
  TrainConfig c;
  c.base_lr = 0.05;
  c.epochs = 30;
  c.lambda = 10.0;
  const auto r = train_parametric(init, tasks, c);
  ASSERT_FALSE(r.aborted);
  EXPECT_NO_THROW(r.params.validate());
  EXPECT_DOUBLE_EQ(r.params.lambda, 10.0);
  for (const auto& e : r.history) EXPECT_NEAR(e.risk, e.transport + e.penalty, 1e-9 * std::max(1.0, e.risk));
}

TEST(TrainParametric, Deterministic) {
  Stream rng(92, StreamPurpose::Init);
  const ParametricParams init = init_params(2, 6, 5.0, 10.0, rng);
  std::vector<Matrix> tasks;
  for (int k = 0; k < 4; ++k) tasks.push_back(ictxot::testing::random_matrix(30, 2, rng));
  TrainConfig c;
  c.base_lr = 0.01;
  c.epochs = 20;
  c.lambda = 5.0;
  c.shuffle = true;
  const auto a = train_parametric(init, tasks, c);
  const auto b = train_parametric(init, tasks, c);
  EXPECT_EQ(pack(a.params), pack(b.params));
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].risk, b.history[i].risk);
}

TEST(TrainNonparametric, ReducesRiskAndIsDeterministic) {
  CrossAttnConfig cfg;
  cfg.hidden = 16;
  cfg.prompt_length = 8;
  Stream rng(93, StreamPurpose::Init);
  const auto init = NonparametricWeights::init(cfg, rng);
  std::vector<NpTaskData> tasks;
  for (int k = 0; k < 3; ++k) {
    using ictxot::testing::random_matrix;
    Matrix shift = random_matrix(1, 2, rng);
    Prompt p{random_matrix(8, 2, rng), random_matrix(8, 2, rng), static_cast<std::uint64_t>(k)};
    Matrix x = random_matrix(16, 2, rng), y = random_matrix(16, 2, rng);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 2; ++j) p.target(i, j) += shift(0, j);
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 2; ++j) y(i, j) += shift(0, j);
    tasks.push_back({p, x, y});
  }
  TrainConfig c;
  c.base_lr = 3e-3;
  c.epochs = 40;
  c.lambda = 1.0;
  const auto a = train_nonparametric(init, tasks, KernelSpec::multiscale_rbf(), c);
  const auto b = train_nonparametric(init, tasks, KernelSpec::multiscale_rbf(), c);
  ASSERT_FALSE(a.aborted);
  EXPECT_LT(a.history.back().risk, a.history.front().risk);
  EXPECT_EQ(pack(a.weights), pack(b.weights));
}
