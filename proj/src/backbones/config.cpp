#include "deepshield/backbones/config.hpp"

#include "deepshield/errors.hpp"
#include "deepshield/json_util.hpp"

namespace deepshield::backbones {

std::string to_string(BackboneKind kind) { return kind == BackboneKind::mbconv ? "mbconv" : "plain"; }

BackboneKind parse_backbone_kind(const std::string& text) {
  if (text == "mbconv") return BackboneKind::mbconv;
  if (text == "plain") return BackboneKind::plain;
  throw ConfigError("backbone kind must be 'mbconv' or 'plain', got '" + text + "'");
}

std::size_t BackboneConfig::token_stride() const {
  std::size_t s = stem.stride;
  for (const auto& st : stages) s *= st.stride;
  return s;
}

std::size_t BackboneConfig::out_channels() const {
  return stages.empty() ? stem.out_channels : stages.back().out_channels;
}

namespace {

void require_positive(std::size_t v, const std::string& field) {
  if (v == 0) throw ConfigError(field + " must be positive");
}

void require_odd_kernel(std::size_t k, const std::string& field) {
  require_positive(k, field);
  if (k % 2 == 0) throw ConfigError(field + " must be odd so that 'same' padding preserves the stride geometry");
}

}  // namespace

void BackboneConfig::validate(std::optional<std::size_t> image_size) const {
  require_positive(in_channels, "backbone.in_channels");
  require_positive(stem.out_channels, "backbone.stem.out_channels");
  require_odd_kernel(stem.kernel, "backbone.stem.kernel");
  require_positive(stem.stride, "backbone.stem.stride");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& st = stages[i];
    const std::string at = "backbone.stages[" + std::to_string(i) + "]";
    require_positive(st.expand_ratio, at + ".expand_ratio");
    require_positive(st.out_channels, at + ".out_channels");
    require_odd_kernel(st.kernel, at + ".kernel");
    require_positive(st.stride, at + ".stride");
    require_positive(st.repeats, at + ".repeats");
    if (kind == BackboneKind::plain && st.expand_ratio != 1) {
      throw ConfigError(at + ".expand_ratio must be 1 for a plain backbone");
    }
    if (kind == BackboneKind::plain && st.use_se) {
      throw ConfigError(at + ".use_se is not allowed for a plain backbone");
    }
  }
  if (image_size) {
    require_positive(*image_size, "image_size");
    if (*image_size % token_stride() != 0) {
      throw ConfigError("backbone token_stride " + std::to_string(token_stride()) + " does not divide image_size " +
                        std::to_string(*image_size));
    }
  }
}

namespace presets {

BackboneConfig desk_mbconv() {
  BackboneConfig c;
  c.kind = BackboneKind::mbconv;
  c.stem = {16, 3, 2};
  c.stages = {
      {1, 16, 3, 1, 1, true},
      {4, 24, 3, 2, 1, true},
      {4, 32, 3, 2, 1, true},
  };
  return c;
}

BackboneConfig desk_plain() {
  BackboneConfig c;
  c.kind = BackboneKind::plain;
  c.stem = {16, 3, 2};
  c.stages = {
      {1, 16, 3, 1, 1, false},
      {1, 24, 3, 2, 1, false},
      {1, 32, 3, 2, 1, false},
  };
  return c;
}

BackboneConfig efficientnet_b0() {
  BackboneConfig c;
  c.kind = BackboneKind::mbconv;
  c.stem = {32, 3, 2};
  c.stages = {
      {1, 16, 3, 1, 1, true},  {6, 24, 3, 2, 2, true},  {6, 40, 5, 2, 2, true},  {6, 80, 3, 2, 3, true},
      {6, 112, 5, 1, 3, true}, {6, 192, 5, 2, 4, true}, {6, 320, 3, 1, 1, true},
  };
  return c;
}

BackboneConfig efficientnet_b0_stride8() {
  BackboneConfig c = efficientnet_b0();
  c.stages.resize(3);
  return c;
}

BackboneConfig wodajo_plain() {
  BackboneConfig c;
  c.kind = BackboneKind::plain;
  c.stem = {32, 3, 2};
  c.stages = {
      {1, 64, 3, 2, 2, false},
      {1, 128, 3, 2, 2, false},
      {1, 256, 3, 2, 3, false},
      {1, 512, 3, 2, 3, false},
  };
  return c;
}

}  // namespace presets

nlohmann::json to_json(const BackboneConfig& config) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& st : config.stages) {
    stages.push_back({{"expand_ratio", st.expand_ratio},
                      {"out_channels", st.out_channels},
                      {"kernel", st.kernel},
                      {"stride", st.stride},
                      {"repeats", st.repeats},
                      {"use_se", st.use_se}});
  }
  return {{"kind", to_string(config.kind)},
          {"in_channels", config.in_channels},
          {"stem",
           {{"out_channels", config.stem.out_channels}, {"kernel", config.stem.kernel}, {"stride", config.stem.stride}}},
          {"stages", stages}};
}

BackboneConfig backbone_from_json(const nlohmann::json& j, const std::string& path) {
  json::ObjectReader r(j, path);
  BackboneConfig c;
  std::string kind;
  r.required("kind", kind);
  try {
    c.kind = parse_backbone_kind(kind);
  } catch (const ConfigError& e) {
    throw ConfigError(r.field("kind") + ": " + e.what());
  }
  r.optional("in_channels", c.in_channels);
  {
    json::ObjectReader s(r.child("stem"), r.field("stem"));
    s.required("out_channels", c.stem.out_channels);
    s.required("kernel", c.stem.kernel);
    s.required("stride", c.stem.stride);
    s.finish();
  }
  const auto& stages = r.child("stages");
  if (!stages.is_array()) throw ConfigError(r.field("stages") + " must be an array");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    json::ObjectReader s(stages[i], r.field("stages") + "[" + std::to_string(i) + "]");
    StageConfig st;
    s.required("expand_ratio", st.expand_ratio);
    s.required("out_channels", st.out_channels);
    s.required("kernel", st.kernel);
    s.required("stride", st.stride);
    s.optional("repeats", st.repeats);
    s.optional("use_se", st.use_se);
    s.finish();
    c.stages.push_back(st);
  }
  r.finish();
  return c;
}

}  // namespace deepshield::backbones
