#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace deepshield::backbones {

enum class BackboneKind { mbconv, plain };

std::string to_string(BackboneKind kind);
BackboneKind parse_backbone_kind(const std::string& text);

struct StemConfig {
  std::size_t out_channels = 16;
  std::size_t kernel = 3;
  std::size_t stride = 2;

  friend bool operator==(const StemConfig&, const StemConfig&) = default;
};

/// One stage of identical blocks; only the first block of a stage strides.
struct StageConfig {
  std::size_t expand_ratio = 1;
  std::size_t out_channels = 16;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t repeats = 1;
  bool use_se = false;

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

struct BackboneConfig {
  BackboneKind kind = BackboneKind::mbconv;
  std::size_t in_channels = 3;
  StemConfig stem;
  std::vector<StageConfig> stages;

  /// Pixels per feature cell per side: product of every stride.
  std::size_t token_stride() const;
  std::size_t out_channels() const;

  /// Throws ConfigError naming the offending field. When `image_size` is
  /// given, also requires token_stride to divide it.
  void validate(std::optional<std::size_t> image_size = std::nullopt) const;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// Squeeze-excitation bottleneck width relative to the block input.
inline constexpr std::size_t kSqueezeReduction = 4;

namespace presets {

/// Desk-scale MBConv network: stem 16, three stages, total stride 8, 32 output channels.
BackboneConfig desk_mbconv();
/// Desk-scale plain CNN with the same geometry as desk_mbconv.
BackboneConfig desk_plain();
/// EfficientNet-B0 stage table (stride 32, 320 channels).
BackboneConfig efficientnet_b0();
/// EfficientNet-B0 cut after the stride-8 stage (40 channels).
BackboneConfig efficientnet_b0_stride8();
/// Plain stacked-conv extractor, stride 32, 512 channels.
BackboneConfig wodajo_plain();

}  // namespace presets

nlohmann::json to_json(const BackboneConfig& config);
BackboneConfig backbone_from_json(const nlohmann::json& j, const std::string& path);

}  // namespace deepshield::backbones
