#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "ictxot/io.hpp"

namespace ictxot {

/// Knobs for mutation testing of the check suite itself.
struct CheckOptions {
  std::uint64_t seed = 0;
  /// Scale applied to the frame when building Q in the construction check.
  double construction_scale = std::pow(std::numbers::pi / 2.0, 0.25);
  /// Feed the biased V-statistic into the unbiasedness check.
  bool biased_mmd_as_unbiased = false;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  Json details;
};

/// Surrogate minimizer bound, f_min → W₂² rate, construction quality and MMD
/// unbiasedness, each with its thresholds recorded in `details`.
std::vector<CheckResult> run_theory_checks(const CheckOptions& options = {});

CheckResult check_minimizer_bound();
CheckResult check_fmin_rate();
CheckResult check_construction(const CheckOptions& options);
CheckResult check_mmd_unbiased(const CheckOptions& options);

}  // namespace ictxot
