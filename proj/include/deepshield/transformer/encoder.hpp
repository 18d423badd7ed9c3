#pragma once

#include <string>
#include <utility>
#include <vector>

#include "deepshield/backbones/tokenizer.hpp"
#include "deepshield/diffcore/mode.hpp"
#include "deepshield/diffcore/ops.hpp"
#include "deepshield/diffcore/parameters.hpp"
#include "deepshield/transformer/config.hpp"

namespace deepshield::transformer {

inline constexpr double kLayerNormEpsilon = 1e-5;

template <typename T>
struct EncoderLayer {
  Var<T> norm1_scale, norm1_shift;
  ops::AttentionParams<T> attention;
  Var<T> norm2_scale, norm2_shift;
  Var<T> fc1_weight, fc1_bias, fc2_weight, fc2_bias;
};

/// Stack of pre-norm transformer blocks:
///   x += attn(ln1(x));  x += mlp(ln2(x))
template <typename T>
class Encoder {
 public:
  Encoder(ParameterStore<T>& store, Initializer& init, const std::string& name, const EncoderConfig& config);

  /// tokens [N,T,D] with CLS at row 0.
  Var<T> forward(const Var<T>& tokens, const ForwardMode& mode) const;

  const EncoderConfig& config() const noexcept { return config_; }
  std::vector<EncoderLayer<T>>& layers() noexcept { return layers_; }

 private:
  EncoderConfig config_;
  std::vector<EncoderLayer<T>> layers_;
};

/// [N,T,D] tokens -> [N,T+1,D] with the CLS token in front and the positional
/// embedding [1,T+1,D] added to every row.
template <typename T>
Var<T> prepend_cls_add_pos(const backbones::TokenGrid<T>& grid, const Var<T>& cls, const Var<T>& pos);

/// Weights for one fusion direction: CLS of branch A talks to the patch tokens
/// of branch B at B's width.
template <typename T>
struct FusionDirection {
  Var<T> to_weight, to_bias;      // A -> B
  ops::AttentionParams<T> attention;
  Var<T> back_weight, back_bias;  // B -> A
  std::size_t heads = 1;
};

template <typename T>
struct FusionRound {
  FusionDirection<T> s_to_l;
  FusionDirection<T> l_to_s;
};

/// Cross-attention exchange between the S and L branches. Only the CLS row of
/// each branch is updated; both directions read the tokens as they were at the
/// start of the round.
template <typename T>
class CrossFusion {
 public:
  CrossFusion(ParameterStore<T>& store, Initializer& init, const std::string& name, std::size_t dim_s,
              std::size_t heads_s, std::size_t dim_l, std::size_t heads_l, std::size_t rounds);

  std::pair<Var<T>, Var<T>> forward(const Var<T>& tokens_s, const Var<T>& tokens_l) const;

  std::vector<FusionRound<T>>& rounds() noexcept { return rounds_; }

 private:
  std::size_t dim_s_, dim_l_;
  std::vector<FusionRound<T>> rounds_;
};

extern template class Encoder<float>;
extern template class Encoder<double>;
extern template class CrossFusion<float>;
extern template class CrossFusion<double>;

}  // namespace deepshield::transformer
