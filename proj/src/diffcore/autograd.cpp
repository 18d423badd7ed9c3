#include "deepshield/diffcore/autograd.hpp"

#include <unordered_set>

#include "deepshield/errors.hpp"

namespace deepshield {

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() noexcept { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) noexcept { grad_mode_enabled = on; }

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
void Var<T>::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(T(0));
}

template <typename T>
Tape<T> Tape<T>::record(const Var<T>& loss) {
  Tape tape;
  std::unordered_set<const Node<T>*> seen;
  // Iterative post-order DFS; the graph can be a few thousand nodes deep.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
      continue;
    }
    tape.order_.push_back(node);
    stack.pop_back();
  }
  return tape;
}

template <typename T>
void backward(const Var<T>& loss, const Tape<T>& tape) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  const auto& records = tape.records();
  if (records.empty() || records.back() != loss.node().get()) {
    throw ContractError("tape was not recorded from this loss");
  }
  if (!loss.requires_grad()) return;
  for (auto* node : records) {
    if (!node->is_leaf) node->grad = Tensor<T>(node->value.shape());
  }
  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn) node->backward_fn(node->grad);
  }
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  backward(loss, Tape<T>::record(loss));
}

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(const Tensor<T>&)> fn) {
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (needs) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void accumulate(const Var<T>& v, const Tensor<T>& g) {
  if (!v.requires_grad()) return;
  auto& buf = v.node()->grad_buffer();
  T* dst = buf.raw();
  const T* src = g.raw();
  const std::size_t n = buf.numel();
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

template class Var<float>;
template class Var<double>;
template class Tape<float>;
template class Tape<double>;
template void backward(const Var<float>&, const Tape<float>&);
template void backward(const Var<double>&, const Tape<double>&);
template void backward(const Var<float>&);
template void backward(const Var<double>&);
template Var<float> make_result(Tensor<float>, std::vector<Var<float>>, std::function<void(const Tensor<float>&)>);
template Var<double> make_result(Tensor<double>, std::vector<Var<double>>,
                                 std::function<void(const Tensor<double>&)>);
template void accumulate(const Var<float>&, const Tensor<float>&);
template void accumulate(const Var<double>&, const Tensor<double>&);

}  // namespace deepshield
