#pragma once

#include <span>
#include <vector>

#include "ictxot/linalg.hpp"

namespace ictxot {

enum class KernelKind { Quadratic, MultiScaleRBF };
enum class BandwidthMode { Adaptive, Fixed };

/// k(u,v) = ⟨u,v⟩² (Quadratic) or Σ_l w_l exp(-‖u-v‖²/σ_l) with
/// σ_l = σ₀·2^(l-⌈L/2⌉), l = 1..L (MultiScaleRBF).
struct KernelSpec {
  KernelKind kind = KernelKind::MultiScaleRBF;
  int levels = 5;
  std::vector<double> weights;  // empty means uniform 1/L
  BandwidthMode bandwidth = BandwidthMode::Adaptive;
  double fixed_bandwidth = 1.0;

  static KernelSpec quadratic();
  static KernelSpec multiscale_rbf(int levels = 5);
  static KernelSpec multiscale_rbf_fixed(double sigma0, int levels = 5);

  void validate() const;
  double weight(int l) const;  // l in [0, levels)
  /// Bandwidth of level l (0-based) for base bandwidth σ₀.
  double level_bandwidth(int l, double sigma0) const;
};

double kernel_eval(const KernelSpec& spec, std::span<const double> u, std::span<const double> v,
                   double sigma0);

struct Bandwidth {
  double value = 1.0;
  bool degenerate = false;  // all pooled points coincided; value fell back to 1
};

/// Mean pairwise squared distance over the pooled set pred ∪ truth,
/// (1/(P(P-1)))·Σ_{i≠j} ‖z_i - z_j‖² with P pooled points.
Bandwidth adaptive_base_bandwidth(const Matrix& pred, const Matrix& truth);

/// σ₀ the estimators will use for this pair of sets under `spec`.
double resolve_bandwidth(const KernelSpec& spec, const Matrix& x, const Matrix& y);

/// Unbiased U-statistic
/// (1/(m(m-1)))·Σ_{i≠j} [k(xᵢ,xⱼ) + k(yᵢ,yⱼ) - k(xᵢ,yⱼ) - k(xⱼ,yᵢ)].
/// The first term pairs xᵢ with xⱼ; a literal k(xᵢ,xᵢ) inside the i≠j sum
/// would not be unbiased. Requires m ≥ 2 equal-size sets.
double mmd2_u(const Matrix& x, const Matrix& y, const KernelSpec& spec, double sigma0);
double mmd2_u(const Matrix& x, const Matrix& y, const KernelSpec& spec);

/// Biased V-statistic over all (i, j) including i = j. Always ≥ 0.
double mmd2_biased(const Matrix& x, const Matrix& y, const KernelSpec& spec, double sigma0);
double mmd2_biased(const Matrix& x, const Matrix& y, const KernelSpec& spec);

/// ‖(1/m)XᵀX - (1/m')YᵀY‖²_F, the quadratic-kernel MMD² in moment form.
double quadratic_mmd2_closed(const Matrix& x, const Matrix& y);

}  // namespace ictxot
