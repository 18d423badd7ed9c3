#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "deepshield/backbones/tokenizer.hpp"
#include "deepshield/transformer/encoder.hpp"

namespace deepshield::transformer {

template <typename T>
struct DetectorOutput {
  Var<T> probs;    // [N]
  Var<T> logit;    // [N], the pre-sigmoid score
  Var<T> logit_s;  // [N], Cross ViT only
  Var<T> logit_l;  // [N], Cross ViT only
};

/// Common surface of both detectors: images in, per-image fake probability out.
template <typename T>
class Detector {
 public:
  virtual ~Detector() = default;
  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;

  /// images [N,C,S,S] with S == config().image_size.
  virtual DetectorOutput<T> forward(const Var<T>& images, const ForwardMode& mode) const = 0;

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore<T>& params() noexcept { return params_; }
  const ParameterStore<T>& params() const noexcept { return params_; }

 protected:
  explicit Detector(ModelConfig config) : config_(std::move(config)) {}

  ModelConfig config_;
  ParameterStore<T> params_;
};

/// One convolutional branch up to (and including) the transformer encoder.
template <typename T>
class Branch {
 public:
  Branch(const BranchConfig& config, std::size_t image_size, ParameterStore<T>& store, Initializer& init,
         const std::string& name);

  /// images -> encoded tokens [N,T+1,D].
  Var<T> encode(const Var<T>& images, const ForwardMode& mode) const;
  /// Tokens ready for the encoder: features, tokenization, CLS and positions.
  Var<T> embed(const Var<T>& images, const ForwardMode& mode) const;

  Var<T> final_norm(const Var<T>& tokens) const;

  const Encoder<T>& encoder() const noexcept { return encoder_; }

  Var<T> cls, pos, norm_scale, norm_shift;

 private:
  backbones::Backbone<T> backbone_;
  backbones::Tokenizer<T> tokenizer_;
  Encoder<T> encoder_;
};

template <typename T>
class EfficientViT final : public Detector<T> {
 public:
  EfficientViT(const ModelConfig& config, std::uint64_t seed);
  DetectorOutput<T> forward(const Var<T>& images, const ForwardMode& mode) const override;

  Var<T> head_weight, head_bias;

 private:
  std::optional<Branch<T>> branch_;
};

template <typename T>
class ConvCrossViT final : public Detector<T> {
 public:
  ConvCrossViT(const ModelConfig& config, std::uint64_t seed);
  DetectorOutput<T> forward(const Var<T>& images, const ForwardMode& mode) const override;

  Var<T> head_s_weight, head_s_bias, head_l_weight, head_l_bias;
  CrossFusion<T>& fusion() { return *fusion_; }

 private:
  std::optional<Branch<T>> s_, l_;
  std::optional<CrossFusion<T>> fusion_;
};

/// Builds the detector named by config.kind; throws ConfigError on an
/// invalid configuration.
template <typename T>
std::unique_ptr<Detector<T>> make_detector(const ModelConfig& config, std::uint64_t seed);

extern template class Branch<float>;
extern template class Branch<double>;
extern template class EfficientViT<float>;
extern template class EfficientViT<double>;
extern template class ConvCrossViT<float>;
extern template class ConvCrossViT<double>;

}  // namespace deepshield::transformer
