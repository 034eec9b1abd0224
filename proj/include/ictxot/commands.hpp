#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ictxot/checks.hpp"
#include "ictxot/config.hpp"
#include "ictxot/io.hpp"
#include "ictxot/theory.hpp"

namespace ictxot {

/// Written to <out>/manifest.json before any compute.
struct RunManifest {
  std::string command;
  Json config;  // fully resolved, defaults filled in
  std::uint64_t seed = 0;
  std::string config_sha1;  // git blob hash of the resolved config text
  std::vector<std::string> outputs;  // relative to the output directory

  Json to_json() const;
};

RunManifest make_manifest(std::string command, Json resolved, std::uint64_t seed, std::vector<std::string> outputs);
void write_manifest(const std::filesystem::path& out_dir, const RunManifest& manifest);

/// Task k of the training set and its fixed 2n-row sample set, with n drawn
/// from the grid by stream (seed, Prompt, k).
std::vector<Matrix> parametric_training_samples(const ParametricExperiment& e);
ParametricTrainResult train_parametric_experiment(const ParametricExperiment& e);

/// Test tasks live at draw indices from here on, disjoint from training.
inline constexpr std::uint64_t kTestTaskIndex = std::uint64_t{1} << 40;

std::vector<NpTaskData> nonparametric_tasks(const NonparametricExperiment& e, std::uint64_t first_index,
                                            std::size_t count, std::size_t pairs);

/// Standard deviation of the displacement field ŷ − x over the query rows:
/// sqrt of the mean squared distance to the mean displacement.
double displacement_std(const Matrix& queries, const Matrix& predictions);

/// Each command writes its manifest first, then its artifacts, and returns a
/// short JSON summary.
Json cmd_train_parametric(const ParametricExperiment& e, const std::filesystem::path& out);
Json cmd_scaling_law(const ParametricExperiment& e, const std::filesystem::path& out);
Json cmd_train_nonparametric(const NonparametricExperiment& e, const std::filesystem::path& out);

/// Writes report.json; `passed` is false if any check failed.
struct TheoryReport {
  std::vector<CheckResult> checks;
  bool passed = false;
};
TheoryReport cmd_validate_theory(const CheckOptions& options, const std::filesystem::path& out);

}  // namespace ictxot
