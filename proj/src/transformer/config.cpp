#include "deepshield/transformer/config.hpp"

#include <cmath>

#include "deepshield/errors.hpp"
#include "deepshield/json_util.hpp"

namespace deepshield::transformer {

std::size_t EncoderConfig::hidden() const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(dim) * mlp_ratio));
}

void EncoderConfig::validate(const std::string& path) const {
  if (dim == 0) throw ConfigError(path + ".dim must be positive");
  if (heads == 0) throw ConfigError(path + ".heads must be positive");
  if (dim % heads != 0) {
    throw ConfigError(path + ".dim (" + std::to_string(dim) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  if (!(mlp_ratio >= 1.0) || !std::isfinite(mlp_ratio)) throw ConfigError(path + ".mlp_ratio must be >= 1");
  if (!(dropout >= 0.0) || dropout >= 1.0) throw ConfigError(path + ".dropout must lie in [0,1)");
}

std::size_t BranchConfig::token_count(std::size_t image_size) const {
  const std::size_t side = image_size / pixel_footprint();
  return side * side;
}

void BranchConfig::validate(std::size_t image_size, const std::string& path) const {
  try {
    backbone.validate(image_size);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (patch_cells == 0) throw ConfigError(path + ".patch_cells must be positive");
  const std::size_t grid = image_size / backbone.token_stride();
  if (grid % patch_cells != 0) {
    throw ConfigError(path + ".patch_cells " + std::to_string(patch_cells) + " does not divide the " +
                      std::to_string(grid) + "x" + std::to_string(grid) + " feature grid");
  }
  encoder.validate(path + ".encoder");
}

std::string to_string(ModelKind kind) {
  return kind == ModelKind::efficient_vit ? "efficient_vit" : "conv_cross_vit";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "efficient_vit") return ModelKind::efficient_vit;
  if (text == "conv_cross_vit") return ModelKind::conv_cross_vit;
  throw ConfigError("model kind must be 'efficient_vit' or 'conv_cross_vit', got '" + text + "'");
}

void ModelConfig::validate() const {
  if (image_size == 0) throw ConfigError("model.image_size must be positive");
  if (kind == ModelKind::efficient_vit) {
    branch.validate(image_size, "model.branch");
    return;
  }
  s_branch.validate(image_size, "model.s_branch");
  l_branch.validate(image_size, "model.l_branch");
  if (fusion_rounds == 0) throw ConfigError("model.fusion_rounds must be at least 1");
  if (s_branch.pixel_footprint() >= l_branch.pixel_footprint()) {
    throw ConfigError("model.s_branch pixel footprint (" + std::to_string(s_branch.pixel_footprint()) +
                      ") must be smaller than model.l_branch footprint (" +
                      std::to_string(l_branch.pixel_footprint()) + ")");
  }
}

namespace presets {

ModelConfig desk_efficient_vit() {
  ModelConfig c;
  c.kind = ModelKind::efficient_vit;
  c.image_size = 64;
  c.branch.backbone = backbones::presets::desk_mbconv();
  c.branch.patch_cells = 1;
  c.branch.encoder = {2, 64, 4, 2.0, 0.0};
  return c;
}

ModelConfig desk_cross_vit(backbones::BackboneKind kind) {
  ModelConfig c;
  c.kind = ModelKind::conv_cross_vit;
  c.image_size = 64;
  const auto bb = kind == backbones::BackboneKind::mbconv ? backbones::presets::desk_mbconv()
                                                           : backbones::presets::desk_plain();
  c.s_branch.backbone = bb;
  c.s_branch.patch_cells = 1;
  c.s_branch.encoder = {2, 64, 4, 2.0, 0.0};
  c.l_branch.backbone = bb;
  c.l_branch.patch_cells = 4;
  c.l_branch.encoder = {2, 128, 4, 2.0, 0.0};
  c.fusion_rounds = 1;
  return c;
}

ModelConfig paper_efficient_vit() {
  ModelConfig c;
  c.kind = ModelKind::efficient_vit;
  c.image_size = 224;
  c.branch.backbone = backbones::presets::efficientnet_b0();
  c.branch.patch_cells = 1;
  c.branch.encoder = {4, 256, 8, 4.0, 0.0};
  return c;
}

ModelConfig paper_cross_vit_b0() {
  ModelConfig c;
  c.kind = ModelKind::conv_cross_vit;
  c.image_size = 224;
  c.s_branch.backbone = backbones::presets::efficientnet_b0();
  c.s_branch.patch_cells = 1;
  c.s_branch.encoder = {4, 192, 6, 4.0, 0.0};
  c.l_branch.backbone = backbones::presets::efficientnet_b0_stride8();
  c.l_branch.patch_cells = 7;
  c.l_branch.encoder = {4, 384, 12, 4.0, 0.0};
  c.fusion_rounds = 1;
  return c;
}

ModelConfig paper_cross_vit_plain() {
  ModelConfig c;
  c.kind = ModelKind::conv_cross_vit;
  c.image_size = 256;
  c.s_branch.backbone = backbones::presets::wodajo_plain();
  c.s_branch.patch_cells = 1;
  c.s_branch.encoder = {4, 192, 6, 4.0, 0.0};
  c.l_branch.backbone = backbones::presets::wodajo_plain();
  c.l_branch.patch_cells = 2;
  c.l_branch.encoder = {4, 384, 12, 4.0, 0.0};
  c.fusion_rounds = 1;
  return c;
}

}  // namespace presets

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"depth", c.depth}, {"dim", c.dim}, {"heads", c.heads}, {"mlp_ratio", c.mlp_ratio}, {"dropout", c.dropout}};
}

nlohmann::json to_json(const BranchConfig& c) {
  return {{"backbone", backbones::to_json(c.backbone)}, {"patch_cells", c.patch_cells}, {"encoder", to_json(c.encoder)}};
}

nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j{{"kind", to_string(c.kind)}, {"image_size", c.image_size}};
  if (c.kind == ModelKind::efficient_vit) {
    j["branch"] = to_json(c.branch);
  } else {
    j["s_branch"] = to_json(c.s_branch);
    j["l_branch"] = to_json(c.l_branch);
    j["fusion_rounds"] = c.fusion_rounds;
  }
  return j;
}

EncoderConfig encoder_from_json(const nlohmann::json& j, const std::string& path) {
  json::ObjectReader r(j, path);
  EncoderConfig c;
  r.required("depth", c.depth);
  r.required("dim", c.dim);
  r.required("heads", c.heads);
  r.optional("mlp_ratio", c.mlp_ratio);
  r.optional("dropout", c.dropout);
  r.finish();
  return c;
}

BranchConfig branch_from_json(const nlohmann::json& j, const std::string& path) {
  json::ObjectReader r(j, path);
  BranchConfig c;
  c.backbone = backbones::backbone_from_json(r.child("backbone"), r.field("backbone"));
  r.required("patch_cells", c.patch_cells);
  c.encoder = encoder_from_json(r.child("encoder"), r.field("encoder"));
  r.finish();
  return c;
}

ModelConfig model_from_json(const nlohmann::json& j, const std::string& path) {
  json::ObjectReader r(j, path);
  ModelConfig c;
  std::string kind;
  r.required("kind", kind);
  try {
    c.kind = parse_model_kind(kind);
  } catch (const ConfigError& e) {
    throw ConfigError(r.field("kind") + ": " + e.what());
  }
  r.required("image_size", c.image_size);
  if (c.kind == ModelKind::efficient_vit) {
    c.branch = branch_from_json(r.child("branch"), r.field("branch"));
  } else {
    c.s_branch = branch_from_json(r.child("s_branch"), r.field("s_branch"));
    c.l_branch = branch_from_json(r.child("l_branch"), r.field("l_branch"));
    r.optional("fusion_rounds", c.fusion_rounds);
  }
  r.finish();
  return c;
}

}  // namespace deepshield::transformer
