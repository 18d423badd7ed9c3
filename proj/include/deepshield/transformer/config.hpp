#pragma once

#include <string>

#include <json.hpp>

#include "deepshield/backbones/config.hpp"

namespace deepshield::transformer {

struct EncoderConfig {
  std::size_t depth = 2;
  std::size_t dim = 64;
  std::size_t heads = 4;
  double mlp_ratio = 2.0;
  double dropout = 0.0;

  std::size_t hidden() const;
  void validate(const std::string& path) const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct BranchConfig {
  backbones::BackboneConfig backbone;
  std::size_t patch_cells = 1;
  EncoderConfig encoder;

  /// Input pixels per token side.
  std::size_t pixel_footprint() const { return backbone.token_stride() * patch_cells; }
  /// Tokens per image (without CLS) at the given input side.
  std::size_t token_count(std::size_t image_size) const;
  void validate(std::size_t image_size, const std::string& path) const;

  friend bool operator==(const BranchConfig&, const BranchConfig&) = default;
};

enum class ModelKind { efficient_vit, conv_cross_vit };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

/// Either a single branch (Efficient ViT) or an S/L branch pair with fusion
/// (Convolutional Cross ViT). The unused branch fields are ignored.
struct ModelConfig {
  ModelKind kind = ModelKind::efficient_vit;
  std::size_t image_size = 64;
  BranchConfig branch;
  BranchConfig s_branch;
  BranchConfig l_branch;
  std::size_t fusion_rounds = 1;

  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

namespace presets {

/// 64px desk profile: desk MBConv backbone, 64 tokens of width 64, depth 2.
ModelConfig desk_efficient_vit();
/// 64px desk profile: S footprint 8 (dim 64), L footprint 32 (dim 128).
ModelConfig desk_cross_vit(backbones::BackboneKind kind = backbones::BackboneKind::mbconv);
/// Image 224, EfficientNet-B0 to stride 32: a 7x7 grid of tokens.
ModelConfig paper_efficient_vit();
/// Image 224; S: B0 stride 32 (footprint 32), L: B0 stride 8 x 7 cells (footprint 56).
ModelConfig paper_cross_vit_b0();
/// Image 256; plain extractor stride 32, S footprint 32, L footprint 64.
ModelConfig paper_cross_vit_plain();

}  // namespace presets

nlohmann::json to_json(const EncoderConfig& c);
nlohmann::json to_json(const BranchConfig& c);
nlohmann::json to_json(const ModelConfig& c);
EncoderConfig encoder_from_json(const nlohmann::json& j, const std::string& path);
BranchConfig branch_from_json(const nlohmann::json& j, const std::string& path);
ModelConfig model_from_json(const nlohmann::json& j, const std::string& path);

}  // namespace deepshield::transformer
