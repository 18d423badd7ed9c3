#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "deepshield/diffcore/tensor.hpp"

namespace deepshield {

/// Thread-local switch for graph recording. Frozen inference runs with
/// recording off so concurrent workers never touch shared graph state.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set_enabled(bool on) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents.
  std::function<void(const Tensor<T>&)> backward_fn;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle on a graph node. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t numel() const { return node_->value.numel(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  bool defined() const noexcept { return node_ != nullptr; }
  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Reverse traversal order for one scalar loss: records in topological order,
/// each reachable node exactly once.
template <typename T>
class Tape {
 public:
  static Tape record(const Var<T>& loss);

  const std::vector<Node<T>*>& records() const noexcept { return order_; }
  std::size_t size() const noexcept { return order_.size(); }

 private:
  std::vector<Node<T>*> order_;
};

/// Populates grad on every requires_grad leaf reachable from `loss`.
/// Leaf gradients accumulate across calls until zero_grad; interior
/// gradients are recomputed from scratch on every call.
template <typename T>
void backward(const Var<T>& loss, const Tape<T>& tape);

template <typename T>
void backward(const Var<T>& loss);

/// Creates the result of an operation. When recording is off or no parent
/// needs a gradient the result is a constant and `fn` is dropped.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(const Tensor<T>&)> fn);

/// Accumulates `g` into the gradient of `v` if it wants one.
template <typename T>
void accumulate(const Var<T>& v, const Tensor<T>& g);

extern template class Var<float>;
extern template class Var<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace deepshield
