#include "nlvae/optim.hpp"

#include <cmath>

namespace nlvae {

template <typename T>
Optimizer<T>::Optimizer(std::vector<Tensor<T>> params) : params_(std::move(params)) {
  for (const auto& p : params_) {
    if (!p.defined() || !p.requires_grad()) throw ContractError("optimizer: every parameter must require a gradient");
  }
}

template <typename T>
void Optimizer<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
std::span<const T> Optimizer<T>::grad_of(std::size_t i) const {
  const auto& p = params_[i];
  return p.has_grad() ? p.grad() : std::span<const T>{};
}

template <typename T>
void Optimizer<T>::check_gradients() const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!all_finite<T>(grad_of(i))) {
      throw NumericError("optimizer: non-finite gradient for parameter " + std::to_string(i));
    }
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamOptions options) : Optimizer<T>(std::move(params)), options_(options) {
  if (!(options_.learning_rate > 0)) throw ConfigError("adam: learning rate must be positive");
  if (!(options_.beta1 >= 0 && options_.beta1 < 1 && options_.beta2 >= 0 && options_.beta2 < 1)) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  for (const auto& p : this->params_) {
    state_.m.emplace_back(p.vec().size(), T(0));
    state_.v.emplace_back(p.vec().size(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  this->check_gradients();
  ++state_.step;
  const T b1 = static_cast<T>(options_.beta1);
  const T b2 = static_cast<T>(options_.beta2);
  const T lr = static_cast<T>(options_.learning_rate);
  const T eps = static_cast<T>(options_.eps);
  const T c1 = T(1) - static_cast<T>(std::pow(options_.beta1, static_cast<double>(state_.step)));
  const T c2 = T(1) - static_cast<T>(std::pow(options_.beta2, static_cast<double>(state_.step)));
  for (std::size_t i = 0; i < this->params_.size(); ++i) {
    auto values = this->params_[i].values_mut();
    const auto g = this->grad_of(i);
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const T gk = g.empty() ? T(0) : g[k];
      m[k] = b1 * m[k] + (T(1) - b1) * gk;
      v[k] = b2 * v[k] + (T(1) - b2) * gk * gk;
      const T mhat = m[k] / c1;
      const T vhat = v[k] / c2;
      values[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
Sgd<T>::Sgd(std::vector<Tensor<T>> params, double learning_rate)
    : Optimizer<T>(std::move(params)), learning_rate_(learning_rate) {
  if (!(learning_rate_ > 0)) throw ConfigError("sgd: learning rate must be positive");
}

template <typename T>
void Sgd<T>::step() {
  this->check_gradients();
  const T lr = static_cast<T>(learning_rate_);
  for (std::size_t i = 0; i < this->params_.size(); ++i) {
    const auto g = this->grad_of(i);
    if (g.empty()) continue;
    auto values = this->params_[i].values_mut();
    for (std::size_t k = 0; k < values.size(); ++k) values[k] -= lr * g[k];
  }
}

template <typename T>
RmsProp<T>::RmsProp(std::vector<Tensor<T>> params, double learning_rate, double rho, double eps)
    : Optimizer<T>(std::move(params)), learning_rate_(learning_rate), rho_(rho), eps_(eps) {
  if (!(learning_rate_ > 0)) throw ConfigError("rmsprop: learning rate must be positive");
  for (const auto& p : this->params_) square_avg_.emplace_back(p.vec().size(), T(0));
}

template <typename T>
void RmsProp<T>::step() {
  this->check_gradients();
  const T lr = static_cast<T>(learning_rate_), rho = static_cast<T>(rho_), eps = static_cast<T>(eps_);
  for (std::size_t i = 0; i < this->params_.size(); ++i) {
    const auto g = this->grad_of(i);
    if (g.empty()) continue;
    auto values = this->params_[i].values_mut();
    auto& s = square_avg_[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      s[k] = rho * s[k] + (T(1) - rho) * g[k] * g[k];
      values[k] -= lr * g[k] / (std::sqrt(s[k]) + eps);
    }
  }
}

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(const std::string& name, std::vector<Tensor<T>> params,
                                             double learning_rate) {
  if (name == "adam") {
    AdamOptions o;
    o.learning_rate = learning_rate;
    return std::make_unique<Adam<T>>(std::move(params), o);
  }
  if (name == "sgd") return std::make_unique<Sgd<T>>(std::move(params), learning_rate);
  if (name == "rmsprop") return std::make_unique<RmsProp<T>>(std::move(params), learning_rate);
  throw ConfigError("unknown optimizer '" + name + "' (expected adam, sgd or rmsprop)");
}

template <typename T>
double clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm) {
  if (!(max_norm > 0)) throw ConfigError("clip_grad_norm: max_norm must be positive");
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.grad_mut()) g *= factor;
    }
  }
  return norm;
}

template class Optimizer<float>;
template class Optimizer<double>;
template class Adam<float>;
template class Adam<double>;
template class Sgd<float>;
template class Sgd<double>;
template class RmsProp<float>;
template class RmsProp<double>;
template std::unique_ptr<Optimizer<float>> make_optimizer<float>(const std::string&, std::vector<Tensor<float>>, double);
template std::unique_ptr<Optimizer<double>> make_optimizer<double>(const std::string&, std::vector<Tensor<double>>,
                                                                   double);
template double clip_grad_norm<float>(std::vector<Tensor<float>>&, double);
template double clip_grad_norm<double>(std::vector<Tensor<double>>&, double);

}  // namespace nlvae
