#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "nlvae/tensor.hpp"

namespace nlvae {

/// Common surface of the first-order optimizers. step() reads each
/// parameter's accumulated gradient (absent gradients count as zero) and
/// updates values in place.
template <typename T>
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Throws NumericError, leaving parameters and state untouched, when any
  /// gradient is non-finite.
  virtual void step() = 0;
  virtual std::string name() const = 0;
  void zero_grad();
  const std::vector<Tensor<T>>& params() const { return params_; }

 protected:
  explicit Optimizer(std::vector<Tensor<T>> params);
  /// Gradient of parameter i, or an empty span when none was accumulated.
  std::span<const T> grad_of(std::size_t i) const;
  void check_gradients() const;

  std::vector<Tensor<T>> params_;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

/// Bias-corrected Adam: p -= lr * mhat / (sqrt(vhat) + eps).
template <typename T>
class Adam final : public Optimizer<T> {
 public:
  Adam(std::vector<Tensor<T>> params, AdamOptions options = {});
  void step() override;
  std::string name() const override { return "adam"; }
  const AdamState<T>& state() const { return state_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  AdamState<T> state_;
};

/// Plain gradient descent: p -= lr * g.
template <typename T>
class Sgd final : public Optimizer<T> {
 public:
  Sgd(std::vector<Tensor<T>> params, double learning_rate);
  void step() override;
  std::string name() const override { return "sgd"; }

 private:
  double learning_rate_;
};

/// v = rho v + (1 - rho) g^2; p -= lr * g / (sqrt(v) + eps).
template <typename T>
class RmsProp final : public Optimizer<T> {
 public:
  RmsProp(std::vector<Tensor<T>> params, double learning_rate, double rho = 0.99, double eps = 1e-8);
  void step() override;
  std::string name() const override { return "rmsprop"; }

 private:
  double learning_rate_;
  double rho_;
  double eps_;
  std::vector<std::vector<T>> square_avg_;
};

/// "adam", "sgd" or "rmsprop"; anything else is a ConfigError.
template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(const std::string& name, std::vector<Tensor<T>> params,
                                             double learning_rate);

/// Scales all gradients so their joint L2 norm is at most max_norm. Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm);

extern template class Optimizer<float>;
extern template class Optimizer<double>;
extern template class Adam<float>;
extern template class Adam<double>;
extern template class Sgd<float>;
extern template class Sgd<double>;
extern template class RmsProp<float>;
extern template class RmsProp<double>;

}  // namespace nlvae
