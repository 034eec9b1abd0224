#include "ictxot/trainer.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace ictxot {

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

std::vector<std::size_t> epoch_order(std::size_t count, std::size_t epoch, const TrainConfig& config) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (config.shuffle) {
    Stream rng(config.seed, StreamPurpose::Shuffle, epoch);
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  return order;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("TrainConfig: base_lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("TrainConfig: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps must be > 0");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (!std::isfinite(lambda) || lambda < 0.0) throw std::invalid_argument("TrainConfig: lambda must be finite and >= 0");
}

void adam_step(std::span<double> params, AdamState& state, std::span<const double> grads, double lr,
               const TrainConfig& config) {
  if (params.size() != grads.size() || state.m.size() != grads.size() || state.v.size() != grads.size()) {
    throw DimensionError("adam_step: parameter, gradient and state sizes differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(config.beta1, t);
  const double correct2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / correct1;
    const double v_hat = state.v[i] / correct2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (total_steps == 0 || step > total_steps) throw std::invalid_argument("cosine_lr: need 0 <= step <= total_steps");
  const double phase = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * (1.0 + std::cos(std::numbers::pi * phase)) / 2.0;
}

TrainResult train(std::vector<double> init, std::size_t task_count, const TrainConfig& config,
                  const TaskObjective& objective, const Projection& project) {
  config.validate();
  if (task_count == 0) throw std::invalid_argument("train: empty task set");
  TrainResult result;
  result.params = std::move(init);
  AdamState state(result.params.size());
  const std::size_t total = config.epochs * task_count;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cosine_lr(step, total, config.base_lr);
    for (std::size_t task : epoch_order(task_count, epoch, config)) {
      TaskStep s = objective(result.params, task);
      if (!std::isfinite(s.loss) || !all_finite(s.grad)) {
        result.aborted = true;
        result.abort_reason = "non-finite loss or gradient at epoch " + std::to_string(epoch) + ", task " +
                              std::to_string(task);
        return result;
      }
      rec.risk += s.loss;
      rec.transport += s.transport;
      rec.penalty += s.penalty;

      std::vector<double> next = result.params;
      adam_step(next, state, s.grad, cosine_lr(step, total, config.base_lr), config);
      if (project) project(next);
      ++step;
      if (!all_finite(next)) {
        result.aborted = true;
        result.abort_reason = "non-finite parameters after step " + std::to_string(step);
        return result;
      }
      result.params = std::move(next);
    }
    const double n = static_cast<double>(task_count);
    rec.risk /= n;
    rec.transport /= n;
    rec.penalty /= n;
    result.history.push_back(rec);
  }
  return result;
}

ParametricTrainResult train_parametric(const ParametricParams& init, std::span<const Matrix> task_samples,
                                       const TrainConfig& config) {
  ParametricParams like = init;
  like.lambda = config.lambda;
  like.validate();

  auto objective = [&](std::span<const double> flat, std::size_t task) {
    const ParametricParams p = unpack(like, flat);
    const ParametricGradient g = grad_loss(p, task_samples[task]);
    TaskStep s;
    s.loss = g.loss;
    s.transport = g.transport;
    s.penalty = g.loss - g.transport;
    s.grad = g.q.data();
    s.grad.insert(s.grad.end(), g.inner.data().begin(), g.inner.data().end());
    for (const ReluUnit& u : g.units) s.grad.push_back(u.c);
    for (const ReluUnit& u : g.units) s.grad.push_back(u.w);
    for (const ReluUnit& u : g.units) s.grad.push_back(u.b);
    return s;
  };
  Projection project;
  if (config.projection) {
    project = [&](std::vector<double>& flat) {
      ParametricParams p = unpack(like, flat);
      project_to_class(p);
      flat = pack(p);
    };
  }
  TrainResult r = train(pack(like), task_samples.size(), config, objective, project);
  return {unpack(like, r.params), std::move(r.history), r.aborted, std::move(r.abort_reason)};
}

NonparametricTrainResult train_nonparametric(const NonparametricWeights& init, std::span<const NpTaskData> tasks,
                                             const KernelSpec& kernel, const TrainConfig& config) {
  kernel.validate();
  auto objective = [&](std::span<const double> flat, std::size_t task) {
    const NpTaskData& t = tasks[task];
    NpGradient g = np_loss_grad(unpack(init, flat), t.prompt, t.sources, t.targets, config.lambda, kernel);
    return TaskStep{g.terms.total, g.terms.transport, config.lambda * g.terms.mmd, std::move(g.flat)};
  };
  TrainResult r = train(pack(init), tasks.size(), config, objective);
  return {unpack(init, r.params), std::move(r.history), r.aborted, std::move(r.abort_reason)};
}

}  // namespace ictxot
