#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ictxot/io.hpp"
#include "ictxot/nonparametric.hpp"
#include "ictxot/tasks.hpp"
#include "ictxot/trainer.hpp"

namespace ictxot {

/// Malformed or inconsistent configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required input file such as a checkpoint is absent (exit code 3).
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exact a·n^{−1/2} + b·n^{−1} + c values replace measured errors.
struct SyntheticLaw {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

struct ParametricExperiment {
  std::uint64_t seed = 0;
  TaskFamilySpec family = TaskFamilySpec::iso_cov(2, 1.0, 3.0);
  // model
  std::size_t units = 32;
  double capacity = 1e4;
  double c_theta = 0.0;  // 0 means √d
  // train
  std::size_t tasks = 500;
  std::vector<std::size_t> n_grid{600, 800, 1000, 1200, 1400, 1600};
  TrainConfig train;
  // eval
  std::vector<std::size_t> test_n{5000};
  std::size_t eval_seeds = 10;
  std::size_t test_tasks = 50;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<SyntheticLaw> synthetic;

  Json to_json() const;
};

struct NonparametricExperiment {
  std::uint64_t seed = 0;
  TaskFamilySpec family = TaskFamilySpec::mean_shift(2, 4.0, 6.0);
  CrossAttnConfig model;
  int kernel_levels = 5;
  // train
  std::size_t tasks = 32;
  std::size_t pairs = 64;  // (xⱼ, yⱼ) pairs scoring each training task
  TrainConfig train;
  // eval
  std::size_t test_tasks = 8;
  std::size_t queries = 256;

  Json to_json() const;
};

/// Sections {seed, task_family, model, train, eval}; unknown keys are
/// rejected. Every error is reported as ConfigError.
ParametricExperiment parse_parametric(const Json& j);
NonparametricExperiment parse_nonparametric(const Json& j);

TaskFamilySpec parse_family(const Json& j);
Json family_to_json(const TaskFamilySpec& spec);

/// Reads and parses a JSON file, mapping I/O and syntax failures to ConfigError.
Json load_config(const std::filesystem::path& path);

}  // namespace ictxot
