#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "deepshield/diffcore/autograd.hpp"

namespace deepshield::ops {

// ---------------------------------------------------------------------------
// Elementwise and shape glue. Binary elementwise ops broadcast numpy-style
// (trailing axes aligned, extent 1 stretches).

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> multiply(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> broadcast_to(const Var<T>& a, const Shape& shape);

template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
template <typename T> Var<T> permute(const Var<T>& a, const std::vector<std::size_t>& axes);
template <typename T> Var<T> transpose_last_two(const Var<T>& a);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T> Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t start, std::size_t length);

/// Sum of all elements, shape [1].
template <typename T> Var<T> sum(const Var<T>& a);
/// Mean along `axis`; the axis is kept with extent 1.
template <typename T> Var<T> mean(const Var<T>& a, std::size_t axis);
/// [N,C,H,W] -> [N,C].
template <typename T> Var<T> global_avg_pool2d(const Var<T>& a);

// ---------------------------------------------------------------------------
// Dense layers

/// Batched matrix product over the last two axes. `b` may be rank 2, in which
/// case it is shared by every batch entry of `a`.
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// y = x W^T + bias over the last axis. `bias` may be undefined.
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
              std::size_t padding);

template <typename T>
Var<T> depthwise_conv2d(const Var<T>& input, const Var<T>& weight, std::size_t stride, std::size_t padding);

// ---------------------------------------------------------------------------
// Normalization

enum class NormKind { layer, batch };

/// Running statistics for batch normalization. Updated in place when
/// normalizing in training mode, read otherwise.
template <typename T>
struct RunningStats {
  Tensor<T>* mean = nullptr;
  Tensor<T>* var = nullptr;
  T momentum = T(0.1);
};

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& scale, const Var<T>& shift, T epsilon);

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& scale, const Var<T>& shift, RunningStats<T> stats,
                  bool training, T epsilon);

/// Dispatches to layer_norm or batch_norm. `stats` is ignored for layer mode.
template <typename T>
Var<T> normalize(NormKind kind, const Var<T>& x, const Var<T>& scale, const Var<T>& shift, T epsilon,
                 RunningStats<T> stats = {}, bool training = true);

// ---------------------------------------------------------------------------
// Nonlinearities

enum class Activation { sigmoid, silu, gelu, relu };

template <typename T> Var<T> activation(Activation kind, const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x) { return activation(Activation::sigmoid, x); }

template <typename T> Var<T> softmax(const Var<T>& x, std::size_t axis);

/// Inverted dropout; identity when `rate` is 0 or `rng` is null.
template <typename T> Var<T> dropout(const Var<T>& x, T rate, std::mt19937_64* rng);

// ---------------------------------------------------------------------------
// Attention

template <typename T>
struct AttentionParams {
  Var<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Scaled dot-product attention with `heads` heads. Queries [N,Tq,D],
/// keys/values [N,Tkv,D] -> [N,Tq,D].
template <typename T>
Var<T> multi_head_attention(const Var<T>& queries, const Var<T>& keys_values, const AttentionParams<T>& params,
                            std::size_t heads);

// ---------------------------------------------------------------------------
// Objective

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy. Probabilities are clamped to [1e-7, 1-1e-7].
template <typename T> Var<T> bce_loss(const Var<T>& prob, const Tensor<T>& label);

}  // namespace deepshield::ops
