#include "deepshield/cli/run_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "deepshield/data/image.hpp"
#include "deepshield/errors.hpp"
#include "deepshield/json_util.hpp"

namespace deepshield::cli {

void TrainingConfig::validate(const std::string& path) const {
  if (epochs < 1) throw ConfigError(path + ".epochs must be at least 1");
  if (batch_size < 1) throw ConfigError(path + ".batch_size must be at least 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ConfigError(path + ".learning_rate must be positive");
  }
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError(path + ".momentum must lie in [0,1)");
  if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) {
    throw ConfigError(path + ".weight_decay must be non-negative");
  }
}

void RunConfig::validate() const {
  model.validate();
  training.validate();
  augment.validate();
  if (augment.final_size != model.image_size) {
    throw ConfigError("augment.final_size (" + std::to_string(augment.final_size) + ") must equal model.image_size (" +
                      std::to_string(model.image_size) + ")");
  }
  normalization.validate();
  inference.validate();
}

namespace presets {

transformer::ModelConfig by_name(const std::string& name) {
  namespace tp = transformer::presets;
  if (name == "desk_efficient_vit") return tp::desk_efficient_vit();
  if (name == "desk_cross_vit") return tp::desk_cross_vit();
  if (name == "desk_cross_vit_plain") return tp::desk_cross_vit(backbones::BackboneKind::plain);
  if (name == "paper_efficient_vit") return tp::paper_efficient_vit();
  if (name == "paper_cross_vit_b0") return tp::paper_cross_vit_b0();
  if (name == "paper_cross_vit_plain") return tp::paper_cross_vit_plain();
  throw ConfigError("unknown model preset '" + name + "'");
}

}  // namespace presets

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["model"] = transformer::to_json(c.model);
  j["training"] = {{"epochs", c.training.epochs},
                   {"batch_size", c.training.batch_size},
                   {"learning_rate", c.training.learning_rate},
                   {"momentum", c.training.momentum},
                   {"weight_decay", c.training.weight_decay},
                   {"seed", c.training.seed}};
  j["augment"] = data::to_json(c.augment);
  j["normalization"] = data::to_json(c.normalization);
  j["inference"] = videoinfer::to_json(c.inference);
  j["paths"] = {{"train_manifest", c.paths.train_manifest},
                {"val_manifest", c.paths.val_manifest},
                {"test_manifest", c.paths.test_manifest},
                {"checkpoint_dir", c.paths.checkpoint_dir},
                {"out_dir", c.paths.out_dir}};
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  json::ObjectReader r(j, "");
  RunConfig c;
  if (r.has("model")) {
    const auto& m = r.child("model");
    if (m.is_object() && m.contains("preset")) {
      json::ObjectReader pr(m, "model");
      std::string name;
      pr.required("preset", name);
      pr.finish();
      c.model = presets::by_name(name);
    } else {
      c.model = transformer::model_from_json(m, "model");
    }
  }
  // The augment default follows the model's input size unless set explicitly.
  c.augment.final_size = c.model.image_size;
  if (r.has("training")) {
    json::ObjectReader t(r.child("training"), "training");
    t.optional("epochs", c.training.epochs);
    t.optional("batch_size", c.training.batch_size);
    t.optional("learning_rate", c.training.learning_rate);
    t.optional("momentum", c.training.momentum);
    t.optional("weight_decay", c.training.weight_decay);
    t.optional("seed", c.training.seed);
    t.finish();
  }
  if (r.has("augment")) {
    auto a = r.child("augment");
    if (a.is_object() && !a.contains("final_size")) a["final_size"] = c.model.image_size;
    c.augment = data::augment_from_json(a, "augment");
  }
  if (r.has("normalization")) c.normalization = data::normalization_from_json(r.child("normalization"), "normalization");
  if (r.has("inference")) c.inference = videoinfer::inference_from_json(r.child("inference"), "inference");
  if (r.has("paths")) {
    json::ObjectReader p(r.child("paths"), "paths");
    p.optional("train_manifest", c.paths.train_manifest);
    p.optional("val_manifest", c.paths.val_manifest);
    p.optional("test_manifest", c.paths.test_manifest);
    p.optional("checkpoint_dir", c.paths.checkpoint_dir);
    p.optional("out_dir", c.paths.out_dir);
    p.finish();
  }
  r.finish();
  c.validate();
  return c;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return run_config_from_json(read_json_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_run_config(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

void write_resolved_config(const RunConfig& c, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::string text = format_run_config(c);
  data::write_file(dir / "resolved_config.json",
                   std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

}  // namespace deepshield::cli
