#include "ictxot/tasks.hpp"

#include <cmath>

namespace ictxot {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::MeanShift: return "MeanShift";
    case TaskKind::DiagCov: return "DiagCov";
    case TaskKind::IsoCov: return "IsoCov";
    case TaskKind::CommonFrame: return "CommonFrame";
  }
  return "unknown";
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "MeanShift") return TaskKind::MeanShift;
  if (name == "DiagCov") return TaskKind::DiagCov;
  if (name == "IsoCov") return TaskKind::IsoCov;
  if (name == "CommonFrame") return TaskKind::CommonFrame;
  throw SpecError("unknown task family '" + name + "'");
}

void TaskFamilySpec::validate() const {
  if (dim == 0) throw SpecError("task family: dim must be positive");
  if (!(sigma2_min > 0.0) || !(sigma2_max >= sigma2_min) || !std::isfinite(sigma2_max)) {
    throw SpecError("task family: need 0 < sigma2_min <= sigma2_max < inf");
  }
  if (kind == TaskKind::MeanShift) {
    if (mean_box.size() != dim) {
      throw SpecError("task family: mean_box needs " + std::to_string(dim) + " intervals");
    }
    for (const auto& iv : mean_box) {
      if (!(iv.lo <= iv.hi)) throw SpecError("task family: degenerate mean interval (lo > hi)");
    }
    return;
  }
  if (!(eig_interval.lo <= eig_interval.hi)) {
    throw SpecError("task family: degenerate eigenvalue interval (lo > hi)");
  }
  if (eig_interval.lo < sigma2_min || eig_interval.hi > sigma2_max) {
    throw SpecError("task family: eigenvalue interval outside [sigma2_min, sigma2_max]");
  }
  if (kind == TaskKind::CommonFrame) {
    if (!frame) throw SpecError("task family: CommonFrame requires a frame");
    if (frame->rows() != dim || frame->cols() != dim) {
      throw SpecError("task family: frame shape " + frame->shape_string() + " does not match dim");
    }
    if (!is_orthogonal(*frame, 1e-10)) throw SpecError("task family: frame is not orthogonal");
  }
}

TaskFamilySpec TaskFamilySpec::mean_shift(std::size_t dim, double lo, double hi) {
  TaskFamilySpec s;
  s.kind = TaskKind::MeanShift;
  s.dim = dim;
  s.mean_box.assign(dim, Interval{lo, hi});
  s.eig_interval = {1.0, 1.0};
  return s;
}

TaskFamilySpec TaskFamilySpec::diag_cov(std::size_t dim, double lo, double hi) {
  TaskFamilySpec s;
  s.kind = TaskKind::DiagCov;
  s.dim = dim;
  s.eig_interval = {lo, hi};
  return s;
}

TaskFamilySpec TaskFamilySpec::iso_cov(std::size_t dim, double lo, double hi) {
  TaskFamilySpec s = diag_cov(dim, lo, hi);
  s.kind = TaskKind::IsoCov;
  return s;
}

TaskFamilySpec TaskFamilySpec::common_frame(Matrix frame, double lo, double hi) {
  TaskFamilySpec s = diag_cov(frame.rows(), lo, hi);
  s.kind = TaskKind::CommonFrame;
  s.frame = std::move(frame);
  return s;
}

bool GaussianTask::centered() const {
  for (double m : mean)
    if (m != 0.0) return false;
  return true;
}

SymMatrix GaussianTask::cov_sqrt() const {
  EigenDecomp e{eigenvalues, frame, 0};
  std::vector<double> roots(eigenvalues.size());
  for (std::size_t i = 0; i < roots.size(); ++i) roots[i] = std::sqrt(eigenvalues[i]);
  return reconstruct(e, roots);
}

GaussianTask GaussianTask::from_frame(std::vector<double> mean, Matrix frame,
                                      std::vector<double> eigenvalues, std::uint64_t seed_id) {
  if (frame.rows() != mean.size() || frame.cols() != mean.size() ||
      eigenvalues.size() != mean.size()) {
    throw DimensionError("GaussianTask: mean, frame " + frame.shape_string() +
                         " and eigenvalues disagree on dimension");
  }
  GaussianTask t;
  t.cov = reconstruct(EigenDecomp{eigenvalues, frame, 0}, eigenvalues);
  t.mean = std::move(mean);
  t.frame = std::move(frame);
  t.eigenvalues = std::move(eigenvalues);
  t.seed_id = seed_id;
  return t;
}

void Prompt::validate() const {
  if (source.rows() != target.rows()) {
    throw DimensionError("Prompt: source " + source.shape_string() + " and target " +
                         target.shape_string() + " differ in length");
  }
  for (double v : source.data())
    if (!std::isfinite(v)) throw std::invalid_argument("Prompt: non-finite source entry");
  for (double v : target.data())
    if (!std::isfinite(v)) throw std::invalid_argument("Prompt: non-finite target entry");
}

std::vector<double> AffineMap::apply(std::span<const double> x) const {
  std::vector<double> y = matvec(matrix, x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += offset[i];
  return y;
}

Matrix AffineMap::apply_rows(const Matrix& points) const {
  Matrix out = matmul_nt(points, matrix);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += offset[c];
  return out;
}

GaussianTask sample_task(const TaskFamilySpec& spec, Stream& rng, std::uint64_t seed_id) {
  spec.validate();
  const std::size_t d = spec.dim;
  std::vector<double> mean(d, 0.0);
  std::vector<double> eig(d, 1.0);
  Matrix frame = Matrix::identity(d);

  switch (spec.kind) {
    case TaskKind::MeanShift:
      for (std::size_t i = 0; i < d; ++i) mean[i] = rng.uniform(spec.mean_box[i].lo, spec.mean_box[i].hi);
      break;
    case TaskKind::DiagCov:
      for (std::size_t i = 0; i < d; ++i) eig[i] = rng.uniform(spec.eig_interval.lo, spec.eig_interval.hi);
      break;
    case TaskKind::IsoCov: {
      const double s2 = rng.uniform(spec.eig_interval.lo, spec.eig_interval.hi);
      eig.assign(d, s2);
      break;
    }
    case TaskKind::CommonFrame:
      for (std::size_t i = 0; i < d; ++i) eig[i] = rng.uniform(spec.eig_interval.lo, spec.eig_interval.hi);
      frame = *spec.frame;
      break;
  }
  return GaussianTask::from_frame(std::move(mean), std::move(frame), std::move(eig), seed_id);
}

GaussianTask sample_task_at(const TaskFamilySpec& spec, std::uint64_t seed, std::uint64_t index) {
  Stream rng(seed, StreamPurpose::TaskDraw, index);
  return sample_task(spec, rng, index);
}

std::vector<GaussianTask> sample_task_set(const TaskFamilySpec& spec, std::uint64_t seed,
                                          std::size_t count, std::uint64_t first_index) {
  std::vector<GaussianTask> tasks;
  tasks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) tasks.push_back(sample_task_at(spec, seed, first_index + i));
  return tasks;
}

Matrix sample_standard_normal(std::size_t count, std::size_t dim, Stream& rng) {
  Matrix z(count, dim);
  for (double& v : z.data()) v = rng.normal();
  return z;
}

Matrix sample_points(const GaussianTask& task, std::size_t count, Stream& rng) {
  const std::size_t d = task.dim();
  Matrix z = sample_standard_normal(count, d, rng);
  std::vector<double> scale(d);
  for (std::size_t i = 0; i < d; ++i) scale[i] = std::sqrt(task.eigenvalues[i]);
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < d; ++c) z(r, c) *= scale[c];
  Matrix out = matmul_nt(z, task.frame);
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < d; ++c) out(r, c) += task.mean[c];
  return out;
}

AffineMap ot_map_oracle(const GaussianTask& task) {
  return AffineMap{task.cov_sqrt().matrix(), task.mean};
}

double w2_identity_to_gaussian(const GaussianTask& task) {
  double w2 = 0.0;
  for (double m : task.mean) w2 += m * m;
  for (double s2 : task.eigenvalues) {
    const double gap = 1.0 - std::sqrt(s2);
    w2 += gap * gap;
  }
  return w2;
}

}  // namespace ictxot
