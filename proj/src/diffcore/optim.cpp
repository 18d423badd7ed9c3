#include "deepshield/diffcore/optim.hpp"

#include <cmath>

#include "deepshield/errors.hpp"

namespace deepshield {

void SgdConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("training.learning_rate must be a finite non-negative number");
  }
  if (!(momentum >= 0.0) || momentum >= 1.0) throw ConfigError("training.momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("training.weight_decay must be a finite non-negative number");
  }
}

template <typename T>
Sgd<T>::Sgd(SgdConfig config) : config_(config) {
  config_.validate();
}

template <typename T>
void Sgd<T>::step(ParameterStore<T>& params) {
  const T lr = static_cast<T>(config_.learning_rate);
  const T mu = static_cast<T>(config_.momentum);
  const T wd = static_cast<T>(config_.weight_decay);
  for (auto& p : params.entries()) {
    if (!p.trainable) continue;
    if (!p.value.has_grad()) throw ContractError("parameter '" + p.name + "' has no gradient");
  }
  for (auto& p : params.entries()) {
    if (!p.trainable) continue;
    auto& w = p.value.mutable_value();
    const auto& g = p.value.grad();
    if (mu == T(0)) {
      for (std::size_t i = 0; i < w.numel(); ++i) w[i] -= lr * (g[i] + wd * w[i]);
      continue;
    }
    auto& v = velocity_.try_emplace(p.name, w.shape()).first->second;
    for (std::size_t i = 0; i < w.numel(); ++i) {
      v[i] = mu * v[i] + g[i] + wd * w[i];
      w[i] -= lr * v[i];
    }
  }
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace deepshield
