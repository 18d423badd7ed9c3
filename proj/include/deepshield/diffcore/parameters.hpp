#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "deepshield/diffcore/autograd.hpp"

namespace deepshield {

/// Named learnable weight (or non-trainable buffer such as running stats).
template <typename T>
struct Parameter {
  std::string name;
  Var<T> value;
  bool trainable = true;
};

/// Ordered, name-unique collection of a model's parameters and buffers.
/// Insertion order is the serialization order.
template <typename T>
class ParameterStore {
 public:
  Var<T> add(std::string name, Tensor<T> init, bool trainable = true);

  Var<T>& at(std::string_view name);
  const Var<T>& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Parameter<T>>& entries() noexcept { return entries_; }
  const std::vector<Parameter<T>>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Number of trainable scalars.
  std::size_t trainable_count() const;
  void zero_grad();

 private:
  std::vector<Parameter<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Deterministic initializer: every draw comes from one seeded stream in
/// parameter-creation order.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  template <typename T>
  Tensor<T> fan_in_uniform(Shape shape, std::size_t fan_in);

  template <typename T>
  Tensor<T> normal(Shape shape, double stddev);

 private:
  std::mt19937_64 rng_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace deepshield
