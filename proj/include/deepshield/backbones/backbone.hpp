#pragma once

#include <string>
#include <vector>

#include "deepshield/backbones/config.hpp"
#include "deepshield/diffcore/mode.hpp"
#include "deepshield/diffcore/ops.hpp"
#include "deepshield/diffcore/parameters.hpp"

namespace deepshield::backbones {

template <typename T>
struct FeatureMap {
  Var<T> values;  // [N,C,Hf,Wf]
  std::size_t token_stride = 1;
};

/// Convolution without bias followed by batch normalization.
template <typename T>
struct ConvNorm {
  Var<T> weight;
  Var<T> scale, shift;
  Var<T> running_mean, running_var;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool depthwise = false;

  static ConvNorm create(ParameterStore<T>& store, Initializer& init, const std::string& name, std::size_t in,
                         std::size_t out, std::size_t kernel, std::size_t stride, bool depthwise = false);
  Var<T> forward(const Var<T>& x, const ForwardMode& mode) const;
};

template <typename T>
struct SqueezeExcite {
  Var<T> reduce_weight, reduce_bias, expand_weight, expand_bias;

  static SqueezeExcite create(ParameterStore<T>& store, Initializer& init, const std::string& name,
                              std::size_t channels, std::size_t squeezed);
  Var<T> forward(const Var<T>& x) const;
};

/// Geometry of one inverted-residual block.
struct BlockSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t expand_ratio = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  bool use_se = false;
  bool residual = false;

  /// Residual iff the block preserves shape.
  static BlockSpec from_stage(std::size_t in_channels, const StageConfig& stage, std::size_t stride);
};

/// expand 1x1 -> depthwise -> optional squeeze-excitation -> project 1x1,
/// plus identity shortcut when shape-preserving.
template <typename T>
class MBConvBlock {
 public:
  MBConvBlock(ParameterStore<T>& store, Initializer& init, const std::string& name, const BlockSpec& spec);
  FeatureMap<T> forward(const FeatureMap<T>& input, const ForwardMode& mode) const;
  const BlockSpec& spec() const noexcept { return spec_; }

 private:
  BlockSpec spec_;
  bool has_expand_ = false;
  ConvNorm<T> expand_, depthwise_, project_;
  bool has_se_ = false;
  SqueezeExcite<T> se_;
};

/// conv -> norm -> relu, the unit of the plain extractor.
template <typename T>
class PlainBlock {
 public:
  PlainBlock(ParameterStore<T>& store, Initializer& init, const std::string& name, std::size_t in,
             std::size_t out, std::size_t kernel, std::size_t stride);
  FeatureMap<T> forward(const FeatureMap<T>& input, const ForwardMode& mode) const;

 private:
  ConvNorm<T> conv_;
};

/// Convolutional feature extractor built from a BackboneConfig. Parameters
/// are registered in the caller's store under `prefix`.
template <typename T>
class Backbone {
 public:
  Backbone(const BackboneConfig& config, ParameterStore<T>& store, Initializer& init,
           const std::string& prefix = "backbone");

  /// images [N,C,H,W] with H == W and token_stride | H.
  FeatureMap<T> extract_features(const Var<T>& images, const ForwardMode& mode) const;

  const BackboneConfig& config() const noexcept { return config_; }

 private:
  BackboneConfig config_;
  ConvNorm<T> stem_;
  std::vector<MBConvBlock<T>> mbconv_;
  std::vector<PlainBlock<T>> plain_;
};

/// Standalone backbone owning its parameters.
template <typename T>
struct BackboneModel {
  ParameterStore<T> params;
  Backbone<T> net;
};

template <typename T>
BackboneModel<T> build_backbone(const BackboneConfig& config, std::uint64_t seed);

extern template class MBConvBlock<float>;
extern template class MBConvBlock<double>;
extern template class Backbone<float>;
extern template class Backbone<double>;

}  // namespace deepshield::backbones
