#pragma once

#include <unordered_map>

#include "deepshield/diffcore/parameters.hpp"

namespace deepshield {

/// Plain SGD with optional momentum and L2 weight decay. The defaults give
/// w <- w - 0.01 * g.
struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;

  void validate() const;
};

template <typename T>
class Sgd {
 public:
  explicit Sgd(SgdConfig config);

  /// Updates every trainable parameter in place from its gradient.
  /// Gradients are left untouched. Throws ContractError when a trainable
  /// parameter has no gradient.
  void step(ParameterStore<T>& params);

  const SgdConfig& config() const noexcept { return config_; }

 private:
  SgdConfig config_;
  std::unordered_map<std::string, Tensor<T>> velocity_;
};

extern template class Sgd<float>;
extern template class Sgd<double>;

}  // namespace deepshield
