#include "deepshield/transformer/models.hpp"

#include "deepshield/errors.hpp"

namespace deepshield::transformer {

namespace {

constexpr double kEmbeddingStddev = 0.02;

std::string join(const std::string& prefix, const std::string& part) {
  return prefix.empty() ? part : prefix + "." + part;
}

/// CLS row after the final norm -> [N] logits.
template <typename T>
Var<T> cls_logit(const Var<T>& tokens, const Var<T>& weight, const Var<T>& bias) {
  const std::size_t n = tokens.dim(0), d = tokens.dim(2);
  Var<T> cls = ops::reshape(ops::slice(tokens, 1, 0, 1), Shape{n, d});
  return ops::reshape(ops::linear(cls, weight, bias), Shape{n});
}

}  // namespace

template <typename T>
Branch<T>::Branch(const BranchConfig& config, std::size_t image_size, ParameterStore<T>& store, Initializer& init,
                  const std::string& name)
    : backbone_(config.backbone, store, init, join(name, "backbone")),
      tokenizer_(store, init, join(name, "tokenizer"), config.backbone.out_channels(), config.patch_cells,
                 config.encoder.dim),
      encoder_(store, init, join(name, "encoder"), config.encoder) {
  const std::size_t d = config.encoder.dim;
  cls = store.add(join(name, "cls"), init.normal<T>(Shape{1, 1, d}, kEmbeddingStddev));
  pos = store.add(join(name, "pos"), init.normal<T>(Shape{1, config.token_count(image_size) + 1, d},
                                                    kEmbeddingStddev));
  norm_scale = store.add(join(name, "norm.scale"), Tensor<T>(Shape{d}, T(1)));
  norm_shift = store.add(join(name, "norm.shift"), Tensor<T>(Shape{d}));
}

template <typename T>
Var<T> Branch<T>::embed(const Var<T>& images, const ForwardMode& mode) const {
  backbones::TokenGrid<T> grid = tokenizer_.tokenize(backbone_.extract_features(images, mode));
  return prepend_cls_add_pos(grid, cls, pos);
}

template <typename T>
Var<T> Branch<T>::encode(const Var<T>& images, const ForwardMode& mode) const {
  return encoder_.forward(embed(images, mode), mode);
}

template <typename T>
Var<T> Branch<T>::final_norm(const Var<T>& tokens) const {
  return ops::layer_norm(tokens, norm_scale, norm_shift, static_cast<T>(kLayerNormEpsilon));
}

template <typename T>
EfficientViT<T>::EfficientViT(const ModelConfig& config, std::uint64_t seed) : Detector<T>(config) {
  if (config.kind != ModelKind::efficient_vit) throw ConfigError("EfficientViT needs model.kind efficient_vit");
  config.validate();
  Initializer init(seed);
  branch_.emplace(config.branch, config.image_size, this->params_, init, "");
  const std::size_t d = config.branch.encoder.dim;
  head_weight = this->params_.add("head.weight", init.fan_in_uniform<T>(Shape{1, d}, d));
  head_bias = this->params_.add("head.bias", init.fan_in_uniform<T>(Shape{1}, d));
}

template <typename T>
DetectorOutput<T> EfficientViT<T>::forward(const Var<T>& images, const ForwardMode& mode) const {
  Var<T> tokens = branch_->final_norm(branch_->encode(images, mode));
  DetectorOutput<T> out;
  out.logit = cls_logit(tokens, head_weight, head_bias);
  out.probs = ops::sigmoid(out.logit);
  return out;
}

template <typename T>
ConvCrossViT<T>::ConvCrossViT(const ModelConfig& config, std::uint64_t seed) : Detector<T>(config) {
  if (config.kind != ModelKind::conv_cross_vit) throw ConfigError("ConvCrossViT needs model.kind conv_cross_vit");
  config.validate();
  Initializer init(seed);
  s_.emplace(config.s_branch, config.image_size, this->params_, init, "s");
  l_.emplace(config.l_branch, config.image_size, this->params_, init, "l");
  const auto& es = config.s_branch.encoder;
  const auto& el = config.l_branch.encoder;
  fusion_.emplace(this->params_, init, "fusion", es.dim, es.heads, el.dim, el.heads, config.fusion_rounds);
  head_s_weight = this->params_.add("head_s.weight", init.fan_in_uniform<T>(Shape{1, es.dim}, es.dim));
  head_s_bias = this->params_.add("head_s.bias", init.fan_in_uniform<T>(Shape{1}, es.dim));
  head_l_weight = this->params_.add("head_l.weight", init.fan_in_uniform<T>(Shape{1, el.dim}, el.dim));
  head_l_bias = this->params_.add("head_l.bias", init.fan_in_uniform<T>(Shape{1}, el.dim));
}

template <typename T>
DetectorOutput<T> ConvCrossViT<T>::forward(const Var<T>& images, const ForwardMode& mode) const {
  Var<T> s = s_->encode(images, mode);
  Var<T> l = l_->encode(images, mode);
  std::tie(s, l) = fusion_->forward(s, l);
  DetectorOutput<T> out;
  out.logit_s = cls_logit(s_->final_norm(s), head_s_weight, head_s_bias);
  out.logit_l = cls_logit(l_->final_norm(l), head_l_weight, head_l_bias);
  out.logit = ops::add(out.logit_s, out.logit_l);
  out.probs = ops::sigmoid(out.logit);
  return out;
}

template <typename T>
std::unique_ptr<Detector<T>> make_detector(const ModelConfig& config, std::uint64_t seed) {
  if (config.kind == ModelKind::efficient_vit) return std::make_unique<EfficientViT<T>>(config, seed);
  return std::make_unique<ConvCrossViT<T>>(config, seed);
}

template class Branch<float>;
template class Branch<double>;
template class EfficientViT<float>;
template class EfficientViT<double>;
template class ConvCrossViT<float>;
template class ConvCrossViT<double>;
template std::unique_ptr<Detector<float>> make_detector(const ModelConfig&, std::uint64_t);
template std::unique_ptr<Detector<double>> make_detector(const ModelConfig&, std::uint64_t);

}  // namespace deepshield::transformer
