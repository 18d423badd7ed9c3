#include "deepshield/backbones/backbone.hpp"

#include "deepshield/errors.hpp"

namespace deepshield::backbones {

namespace {

constexpr double kNormEpsilon = 1e-5;

}  // namespace

template <typename T>
ConvNorm<T> ConvNorm<T>::create(ParameterStore<T>& store, Initializer& init, const std::string& name, std::size_t in,
                                std::size_t out, std::size_t kernel, std::size_t stride, bool depthwise) {
  ConvNorm c;
  c.stride = stride;
  c.padding = kernel / 2;
  c.depthwise = depthwise;
  const std::size_t fan_in = (depthwise ? 1 : in) * kernel * kernel;
  c.weight = store.add(name + ".conv.weight",
                       init.fan_in_uniform<T>(Shape{out, depthwise ? 1 : in, kernel, kernel}, fan_in));
  c.scale = store.add(name + ".norm.scale", Tensor<T>(Shape{out}, T(1)));
  c.shift = store.add(name + ".norm.shift", Tensor<T>(Shape{out}));
  c.running_mean = store.add(name + ".norm.running_mean", Tensor<T>(Shape{out}), false);
  c.running_var = store.add(name + ".norm.running_var", Tensor<T>(Shape{out}, T(1)), false);
  return c;
}

template <typename T>
Var<T> ConvNorm<T>::forward(const Var<T>& x, const ForwardMode& mode) const {
  Var<T> y = depthwise ? ops::depthwise_conv2d(x, weight, stride, padding)
                       : ops::conv2d(x, weight, Var<T>(), stride, padding);
  // Handles share nodes, so copies give write access to the running buffers.
  Var<T> mean = running_mean, var = running_var;
  ops::RunningStats<T> stats{&mean.mutable_value(), &var.mutable_value(), T(0.1)};
  return ops::batch_norm(y, scale, shift, stats, mode.training, static_cast<T>(kNormEpsilon));
}

template <typename T>
SqueezeExcite<T> SqueezeExcite<T>::create(ParameterStore<T>& store, Initializer& init, const std::string& name,
                                          std::size_t channels, std::size_t squeezed) {
  SqueezeExcite s;
  s.reduce_weight = store.add(name + ".reduce.weight", init.fan_in_uniform<T>(Shape{squeezed, channels}, channels));
  s.reduce_bias = store.add(name + ".reduce.bias", init.fan_in_uniform<T>(Shape{squeezed}, channels));
  s.expand_weight = store.add(name + ".expand.weight", init.fan_in_uniform<T>(Shape{channels, squeezed}, squeezed));
  s.expand_bias = store.add(name + ".expand.bias", init.fan_in_uniform<T>(Shape{channels}, squeezed));
  return s;
}

template <typename T>
Var<T> SqueezeExcite<T>::forward(const Var<T>& x) const {
  const std::size_t n = x.dim(0), c = x.dim(1);
  Var<T> pooled = ops::global_avg_pool2d(x);
  Var<T> hidden = ops::activation(ops::Activation::silu, ops::linear(pooled, reduce_weight, reduce_bias));
  Var<T> gate = ops::sigmoid(ops::linear(hidden, expand_weight, expand_bias));
  return ops::multiply(x, ops::reshape(gate, Shape{n, c, 1, 1}));
}

BlockSpec BlockSpec::from_stage(std::size_t in_channels, const StageConfig& stage, std::size_t stride) {
  BlockSpec b;
  b.in_channels = in_channels;
  b.out_channels = stage.out_channels;
  b.expand_ratio = stage.expand_ratio;
  b.kernel = stage.kernel;
  b.stride = stride;
  b.use_se = stage.use_se;
  b.residual = stride == 1 && in_channels == stage.out_channels;
  return b;
}

template <typename T>
MBConvBlock<T>::MBConvBlock(ParameterStore<T>& store, Initializer& init, const std::string& name,
                            const BlockSpec& spec)
    : spec_(spec) {
  if (spec.residual && (spec.stride != 1 || spec.in_channels != spec.out_channels)) {
    throw ConfigError(name + ": residual connection requires stride 1 and in_channels == out_channels (got stride " +
                      std::to_string(spec.stride) + ", " + std::to_string(spec.in_channels) + " -> " +
                      std::to_string(spec.out_channels) + ")");
  }
  const std::size_t expanded = spec.in_channels * spec.expand_ratio;
  has_expand_ = spec.expand_ratio != 1;
  if (has_expand_) expand_ = ConvNorm<T>::create(store, init, name + ".expand", spec.in_channels, expanded, 1, 1);
  depthwise_ = ConvNorm<T>::create(store, init, name + ".depthwise", expanded, expanded, spec.kernel, spec.stride, true);
  has_se_ = spec.use_se;
  if (has_se_) {
    const std::size_t squeezed = std::max<std::size_t>(1, spec.in_channels / kSqueezeReduction);
    se_ = SqueezeExcite<T>::create(store, init, name + ".se", expanded, squeezed);
  }
  project_ = ConvNorm<T>::create(store, init, name + ".project", expanded, spec.out_channels, 1, 1);
}

template <typename T>
FeatureMap<T> MBConvBlock<T>::forward(const FeatureMap<T>& input, const ForwardMode& mode) const {
  if (input.values.dim(1) != spec_.in_channels) {
    throw DimensionError("MBConv block expects " + std::to_string(spec_.in_channels) + " channels, got " +
                         shape_str(input.values.shape()));
  }
  Var<T> x = input.values;
  if (has_expand_) x = ops::activation(ops::Activation::silu, expand_.forward(x, mode));
  x = ops::activation(ops::Activation::silu, depthwise_.forward(x, mode));
  if (has_se_) x = se_.forward(x);
  x = project_.forward(x, mode);
  if (spec_.residual) x = ops::add(x, input.values);
  return {x, input.token_stride * spec_.stride};
}

template <typename T>
PlainBlock<T>::PlainBlock(ParameterStore<T>& store, Initializer& init, const std::string& name, std::size_t in,
                          std::size_t out, std::size_t kernel, std::size_t stride)
    : conv_(ConvNorm<T>::create(store, init, name, in, out, kernel, stride)) {}

template <typename T>
FeatureMap<T> PlainBlock<T>::forward(const FeatureMap<T>& input, const ForwardMode& mode) const {
  return {ops::activation(ops::Activation::relu, conv_.forward(input.values, mode)),
          input.token_stride * conv_.stride};
}

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& config, ParameterStore<T>& store, Initializer& init,
                      const std::string& prefix)
    : config_(config) {
  config_.validate();
  stem_ = ConvNorm<T>::create(store, init, prefix + ".stem", config.in_channels, config.stem.out_channels,
                              config.stem.kernel, config.stem.stride);
  std::size_t channels = config.stem.out_channels;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const auto& stage = config.stages[s];
    for (std::size_t r = 0; r < stage.repeats; ++r) {
      const std::string name = prefix + ".stage" + std::to_string(s) + ".block" + std::to_string(r);
      const std::size_t stride = r == 0 ? stage.stride : 1;
      if (config.kind == BackboneKind::mbconv) {
        mbconv_.emplace_back(store, init, name, BlockSpec::from_stage(channels, stage, stride));
      } else {
        plain_.emplace_back(store, init, name, channels, stage.out_channels, stage.kernel, stride);
      }
      channels = stage.out_channels;
    }
  }
}

template <typename T>
FeatureMap<T> Backbone<T>::extract_features(const Var<T>& images, const ForwardMode& mode) const {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != config_.in_channels) {
    throw InputError("backbone expects images [N," + std::to_string(config_.in_channels) + ",H,W], got " +
                     shape_str(s));
  }
  if (s[2] != s[3]) throw InputError("face crops must be square, got " + shape_str(s));
  const std::size_t stride = config_.token_stride();
  if (s[2] % stride != 0) {
    throw InputError("image side " + std::to_string(s[2]) + " is not divisible by token_stride " +
                     std::to_string(stride));
  }
  const ForwardMode m = mode;
  Var<T> x = stem_.forward(images, m);
  x = ops::activation(config_.kind == BackboneKind::mbconv ? ops::Activation::silu : ops::Activation::relu, x);
  FeatureMap<T> fm{x, config_.stem.stride};
  for (const auto& block : mbconv_) fm = block.forward(fm, m);
  for (const auto& block : plain_) fm = block.forward(fm, m);
  if (fm.token_stride != stride || fm.values.dim(2) * stride != s[2] || fm.values.dim(3) * stride != s[3]) {
    throw ContractError("backbone downsampling " + shape_str(fm.values.shape()) + " disagrees with token_stride " +
                        std::to_string(stride));
  }
  return fm;
}

template <typename T>
BackboneModel<T> build_backbone(const BackboneConfig& config, std::uint64_t seed) {
  ParameterStore<T> store;
  Initializer init(seed);
  Backbone<T> net(config, store, init);
  return BackboneModel<T>{std::move(store), std::move(net)};
}

template struct ConvNorm<float>;
template struct ConvNorm<double>;
template struct SqueezeExcite<float>;
template struct SqueezeExcite<double>;
template class MBConvBlock<float>;
template class MBConvBlock<double>;
template class PlainBlock<float>;
template class PlainBlock<double>;
template class Backbone<float>;
template class Backbone<double>;
template BackboneModel<float> build_backbone(const BackboneConfig&, std::uint64_t);
template BackboneModel<double> build_backbone(const BackboneConfig&, std::uint64_t);

}  // namespace deepshield::backbones
