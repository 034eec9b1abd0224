#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ictxot/linalg.hpp"
#include "ictxot/rng.hpp"

namespace ictxot {

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class TaskKind { MeanShift, DiagCov, IsoCov, CommonFrame };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Distribution over Gaussian targets N(μ, Σ); the source is always N(0, I).
struct TaskFamilySpec {
  TaskKind kind = TaskKind::IsoCov;
  std::size_t dim = 2;
  std::vector<Interval> mean_box;  // MeanShift: one interval per coordinate
  Interval eig_interval{1.0, 1.0};  // covariance families: range of each σ²
  std::optional<Matrix> frame;      // CommonFrame only
  double sigma2_min = 1e-6;
  double sigma2_max = 1e6;

  /// Throws SpecError on an inconsistent spec.
  void validate() const;

  static TaskFamilySpec mean_shift(std::size_t dim, double lo, double hi);
  static TaskFamilySpec diag_cov(std::size_t dim, double lo, double hi);
  static TaskFamilySpec iso_cov(std::size_t dim, double lo, double hi);
  static TaskFamilySpec common_frame(Matrix frame, double lo, double hi);
};

struct GaussianTask {
  std::vector<double> mean;
  SymMatrix cov;
  Matrix frame;                     // orthogonal; cov = frame·diag(eigenvalues)·frameᵀ
  std::vector<double> eigenvalues;  // σᵢ², paired with frame columns
  std::uint64_t seed_id = 0;

  std::size_t dim() const { return mean.size(); }
  bool centered() const;
  /// Σ^{1/2} assembled from the stored frame and eigenvalues.
  SymMatrix cov_sqrt() const;

  /// Builds a task from a mean, frame and eigenvalues.
  static GaussianTask from_frame(std::vector<double> mean, Matrix frame,
                                 std::vector<double> eigenvalues, std::uint64_t seed_id = 0);
};

/// One in-context prompt: paired sample sets from the source and target.
struct Prompt {
  Matrix source;
  Matrix target;
  std::uint64_t task_id = 0;

  std::size_t length() const { return source.rows(); }
  void validate() const;
};

struct AffineMap {
  Matrix matrix;
  std::vector<double> offset;

  std::vector<double> apply(std::span<const double> x) const;
  /// Applies the map to every row.
  Matrix apply_rows(const Matrix& points) const;
};

GaussianTask sample_task(const TaskFamilySpec& spec, Stream& rng, std::uint64_t seed_id = 0);

/// Task `index` of the set drawn from `seed`: uses stream (seed, TaskDraw, index).
GaussianTask sample_task_at(const TaskFamilySpec& spec, std::uint64_t seed, std::uint64_t index);
std::vector<GaussianTask> sample_task_set(const TaskFamilySpec& spec, std::uint64_t seed,
                                          std::size_t count, std::uint64_t first_index = 0);

/// count×d samples mean + frame·diag(σ)·z with z standard normal.
Matrix sample_points(const GaussianTask& task, std::size_t count, Stream& rng);
/// count×d standard normal samples.
Matrix sample_standard_normal(std::size_t count, std::size_t dim, Stream& rng);

/// Brenier map from N(0, I) to the task's target: x ↦ Σ^{1/2}x + μ.
AffineMap ot_map_oracle(const GaussianTask& task);

/// W₂² between N(0, I) and N(μ, Σ): ‖μ‖² + Σᵢ (1 − σᵢ)².
double w2_identity_to_gaussian(const GaussianTask& task);

}  // namespace ictxot
