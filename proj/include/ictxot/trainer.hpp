#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ictxot/mmd.hpp"
#include "ictxot/nonparametric.hpp"
#include "ictxot/parametric.hpp"
#include "ictxot/tasks.hpp"

namespace ictxot {

struct TrainConfig {
  double base_lr = 3e-5;
  std::size_t epochs = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool projection = true;  // parametric path only
  bool shuffle = false;
  double lambda = 1000.0;

  /// Throws std::invalid_argument unless base_lr > 0, 0 ≤ β < 1, epochs ≥ 1.
  void validate() const;
};

/// First and second moment estimates plus the step counter.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<double> params, AdamState& state, std::span<const double> grads, double lr,
               const TrainConfig& config);

/// base_lr·(1 + cos(π·step/total))/2
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;          // rate at the epoch's first step
  double risk = 0.0;        // mean per-task loss, evaluated before each step
  double transport = 0.0;
  double penalty = 0.0;     // λ-weighted term
};

/// Loss, its split and the flat gradient for one task at the given point.
struct TaskStep {
  double loss = 0.0;
  double transport = 0.0;
  double penalty = 0.0;
  std::vector<double> grad;
};

using TaskObjective = std::function<TaskStep(std::span<const double> params, std::size_t task)>;
using Projection = std::function<void(std::vector<double>& params)>;

struct TrainResult {
  std::vector<double> params;  // last finite iterate
  std::vector<EpochRecord> history;
  bool aborted = false;
  std::string abort_reason;
};

/// Each epoch visits every task once (fixed order unless shuffle is set) and
/// takes one Adam step per task with a per-step cosine schedule. A non-finite
/// loss or gradient stops the run and returns the parameters from before the
/// failing step.
TrainResult train(std::vector<double> init, std::size_t task_count, const TrainConfig& config,
                  const TaskObjective& objective, const Projection& project = {});

struct ParametricTrainResult {
  ParametricParams params;
  std::vector<EpochRecord> history;
  bool aborted = false;
  std::string abort_reason;
};

/// Trains on fixed per-task sample sets (2n rows each, see loss()). λ comes
/// from the config and overrides init.lambda.
ParametricTrainResult train_parametric(const ParametricParams& init, std::span<const Matrix> task_samples,
                                       const TrainConfig& config);

/// One training task: the prompt and the (xⱼ, yⱼ) pairs scoring the map.
struct NpTaskData {
  Prompt prompt;
  Matrix sources;
  Matrix targets;
};

struct NonparametricTrainResult {
  NonparametricWeights weights;
  std::vector<EpochRecord> history;
  bool aborted = false;
  std::string abort_reason;
};

NonparametricTrainResult train_nonparametric(const NonparametricWeights& init, std::span<const NpTaskData> tasks,
                                             const KernelSpec& kernel, const TrainConfig& config);

}  // namespace ictxot
