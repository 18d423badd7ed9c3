#include "deepshield/diffcore/parameters.hpp"

#include <cmath>

#include "deepshield/errors.hpp"

namespace deepshield {

template <typename T>
Var<T> ParameterStore<T>::add(std::string name, Tensor<T> init, bool trainable) {
  if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back(Parameter<T>{std::move(name), Var<T>(std::move(init), trainable), trainable});
  return entries_.back().value;
}

template <typename T>
Var<T>& ParameterStore<T>::at(std::string_view name) {
  return const_cast<Var<T>&>(std::as_const(*this).at(name));
}

template <typename T>
const Var<T>& ParameterStore<T>::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].value;
}

template <typename T>
bool ParameterStore<T>::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

template <typename T>
std::size_t ParameterStore<T>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) {
    if (p.trainable) n += p.value.numel();
  }
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : entries_) p.value.zero_grad();
}

template <typename T>
Tensor<T> Initializer::fan_in_uniform(Shape shape, std::size_t fan_in) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng_));
  return t;
}

template <typename T>
Tensor<T> Initializer::normal(Shape shape, double stddev) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng_));
  return t;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template Tensor<float> Initializer::fan_in_uniform<float>(Shape, std::size_t);
template Tensor<double> Initializer::fan_in_uniform<double>(Shape, std::size_t);
template Tensor<float> Initializer::normal<float>(Shape, double);
template Tensor<double> Initializer::normal<double>(Shape, double);

}  // namespace deepshield
