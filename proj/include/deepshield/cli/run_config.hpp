#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "deepshield/data/augment.hpp"
#include "deepshield/data/batching.hpp"
#include "deepshield/transformer/config.hpp"
#include "deepshield/videoinfer/videoinfer.hpp"

namespace deepshield::cli {

struct TrainingConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  void validate(const std::string& path = "training") const;
  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct Paths {
  std::string train_manifest;
  std::string val_manifest;
  std::string test_manifest;
  std::string checkpoint_dir;
  std::string out_dir;

  friend bool operator==(const Paths&, const Paths&) = default;
};

/// Everything a train/infer run depends on besides its input files.
///
/// The "model" object is either a full model config or {"preset": NAME}
/// with a preset from presets::by_name; the resolved echo always holds the
/// expanded form.
struct RunConfig {
  transformer::ModelConfig model = transformer::presets::desk_efficient_vit();
  TrainingConfig training;
  data::AugmentConfig augment;
  data::Normalization normalization;
  videoinfer::InferenceConfig inference;
  Paths paths;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Pretty JSON with a trailing newline; the file every run writes as
/// resolved_config.json.
std::string format_run_config(const RunConfig& c);
void write_resolved_config(const RunConfig& c, const std::filesystem::path& dir);

/// Reads a whole JSON document, mapping parse failures to ConfigError and
/// missing files to IoError.
nlohmann::json read_json_file(const std::filesystem::path& path);

namespace presets {
/// desk_efficient_vit, desk_cross_vit, desk_cross_vit_plain, paper_efficient_vit,
/// paper_cross_vit_b0, paper_cross_vit_plain.
transformer::ModelConfig by_name(const std::string& name);
}  // namespace presets

}  // namespace deepshield::cli
