#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ictxot/autodiff.hpp"
#include "ictxot/linalg.hpp"
#include "ictxot/mmd.hpp"
#include "ictxot/rng.hpp"
#include "ictxot/tasks.hpp"

namespace ictxot {

struct CrossAttnConfig {
  std::size_t dim = 2;
  std::size_t hidden = 128;
  std::size_t heads = 4;
  std::size_t prompt_length = 64;

  std::size_t head_dim() const { return hidden / heads; }
  /// Throws std::invalid_argument on zero sizes or hidden % heads != 0.
  void validate() const;
};

/// x·weight + bias, weight stored in×out.
struct Dense {
  Matrix weight;
  Matrix bias;  // 1×out
};

/// Per-head projections; head outputs are mapped back to the hidden width
/// by their slice of the output projection and summed.
struct Attention {
  std::vector<Matrix> query;  // h×(h/heads)
  std::vector<Matrix> key;
  std::vector<Matrix> value;
  std::vector<Matrix> output;  // (h/heads)×h
};

struct NonparametricWeights {
  CrossAttnConfig config;
  Dense source_in, source_hidden;  // d→h, h→h
  Dense target_in, target_hidden;
  Attention self_attention;  // over prompt tokens
  Attention cross_attention;  // queries → prompt context
  Dense head_in, head_out;   // h→h, h→d

  /// Visits every parameter tensor in the fixed order used by pack().
  void for_each(const std::function<void(Matrix&)>& fn);
  void for_each(const std::function<void(const Matrix&)>& fn) const;
  std::size_t parameter_count() const;

  /// Dense layers use N(0, 2/fan_in), attention projections N(0, 1/fan_in);
  /// the final layer is scaled by 0.1.
  static NonparametricWeights init(const CrossAttnConfig& config, Stream& rng);
};

std::vector<double> pack(const NonparametricWeights& w);
NonparametricWeights unpack(const NonparametricWeights& like, std::span<const double> flat);

/// Predictions ŷ for each query row, conditioned on the prompt.
Matrix np_forward(const NonparametricWeights& w, const Prompt& prompt, const Matrix& queries);

struct NpLossTerms {
  double total = 0.0;
  double transport = 0.0;  // (1/n)Σ‖ŷⱼ − xⱼ‖²
  double mmd = 0.0;        // mmd2_u(ŷ, targets)
};

/// Transport cost of the predicted map on `sources` plus λ·MMD²_u between the
/// predictions and `targets`.
NpLossTerms np_loss(const NonparametricWeights& w, const Prompt& prompt, const Matrix& sources,
                    const Matrix& targets, double lambda, const KernelSpec& kernel);

struct NpGradient {
  NpLossTerms terms;
  std::vector<double> flat;  // pack() layout
  double relu_margin = 0.0;
};

NpGradient np_loss_grad(const NonparametricWeights& w, const Prompt& prompt, const Matrix& sources,
                        const Matrix& targets, double lambda, const KernelSpec& kernel);

}  // namespace ictxot
