#pragma once

#include <optional>

#include "nlvae/model.hpp"

namespace nlvae {

/// Scalar loss terms of one step. total = l_r + beta * l_kl + alpha.
struct LossBreakdown {
  double l_r = 0;
  double l_kl = 0;
  double beta = 0;
  double alpha = 0;
  double total = 0;
};

enum class ReconstructionLoss { kL2, kL1 };

/// kStandard is the Gaussian KL, -1/2 sum(1 + log s^2 - mu^2 - s^2), which is
/// non-negative. kPrinted drops the -1/2 factor (the sum itself, <= 0).
enum class KlConvention { kStandard, kPrinted };

/// (1/M) sum_i sum_j (x_ij - xhat_ij)^2 over an [M, ...] batch (|.| for L1).
template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& pred, const Tensor<T>& target,
                              ReconstructionLoss kind = ReconstructionLoss::kL2);

/// KL(q(z|x) || N(0, I)) summed over J and averaged over the M posteriors.
template <typename T>
Tensor<T> kl_loss(const LatentDistribution<T>& dist, KlConvention convention = KlConvention::kStandard);

/// Differentiable l_r + beta * l_kl + alpha. Throws ConfigError for beta < 0.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_r, const Tensor<T>& l_kl, double beta, double alpha);

/// Value-level counterpart of total_loss.
LossBreakdown total_loss(double l_r, double l_kl, double beta, double alpha);

/// The per-scale multiplier table: 3 -> 150, 4 -> 200, 8 -> 300. An explicit
/// override always wins; any other scale without one is a ConfigError.
double beta_for_scale(int scale, std::optional<double> override_beta = std::nullopt);

inline constexpr double kGlobalBeta = 500.0;

/// explicit > per-scale table > kGlobalBeta.
double resolve_beta(int scale, std::optional<double> explicit_beta);

}  // namespace nlvae
