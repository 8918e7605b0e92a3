#include "nlvae/objective.hpp"

#include <cmath>
#include <string>

namespace nlvae {

template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& pred, const Tensor<T>& target, ReconstructionLoss kind) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("reconstruction_loss: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  if (pred.rank() < 1 || pred.dim(0) < 1) throw ShapeError("reconstruction_loss: need a batch of at least one");
  const Tensor<T> diff = sub(pred, target);
  const Tensor<T> err = kind == ReconstructionLoss::kL2 ? square(diff) : abs(diff);
  return scale(sum(err), T(1) / static_cast<T>(pred.dim(0)));
}

template <typename T>
Tensor<T> kl_loss(const LatentDistribution<T>& dist, KlConvention convention) {
  if (dist.mu.shape() != dist.log_var.shape()) throw ShapeError("kl_loss: mu and log_var shapes differ");
  const std::int64_t m = dist.mu.rank() == 2 ? dist.mu.dim(0) : 1;
  // exp(lv) + mu^2 - 1 - lv is >= 0 elementwise, so the prior gives +0, not -0.
  const Tensor<T> terms = sub(add(exp(dist.log_var), square(dist.mu)), add_scalar(dist.log_var, T(1)));
  const T factor = convention == KlConvention::kStandard ? T(0.5) : T(-1);
  return scale(sum(terms), factor / static_cast<T>(m));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_r, const Tensor<T>& l_kl, double beta, double alpha) {
  if (!(beta >= 0)) throw ConfigError("total_loss: beta must be non-negative");
  return add_scalar(add(l_r, scale(l_kl, static_cast<T>(beta))), static_cast<T>(alpha));
}

LossBreakdown total_loss(double l_r, double l_kl, double beta, double alpha) {
  if (!(beta >= 0)) throw ConfigError("total_loss: beta must be non-negative");
  return {l_r, l_kl, beta, alpha, l_r + beta * l_kl + alpha};
}

double beta_for_scale(int scale, std::optional<double> override_beta) {
  if (override_beta) {
    if (!(*override_beta >= 0)) throw ConfigError("beta must be non-negative");
    return *override_beta;
  }
  switch (scale) {
    case 3: return 150.0;
    case 4: return 200.0;
    case 8: return 300.0;
    default:
      throw ConfigError("no default beta for scale " + std::to_string(scale) + "; pass an explicit beta");
  }
}

double resolve_beta(int scale, std::optional<double> explicit_beta) {
  if (explicit_beta || scale == 3 || scale == 4 || scale == 8) return beta_for_scale(scale, explicit_beta);
  return kGlobalBeta;
}

template Tensor<float> reconstruction_loss<float>(const Tensor<float>&, const Tensor<float>&, ReconstructionLoss);
template Tensor<double> reconstruction_loss<double>(const Tensor<double>&, const Tensor<double>&, ReconstructionLoss);
template Tensor<float> kl_loss<float>(const LatentDistribution<float>&, KlConvention);
template Tensor<double> kl_loss<double>(const LatentDistribution<double>&, KlConvention);
template Tensor<float> total_loss<float>(const Tensor<float>&, const Tensor<float>&, double, double);
template Tensor<double> total_loss<double>(const Tensor<double>&, const Tensor<double>&, double, double);

}  // namespace nlvae
