#pragma once

#include <filesystem>
#include <memory>

#include "deepshield/transformer/models.hpp"

namespace deepshield::transformer {

inline constexpr int kCheckpointVersion = 1;

/// A checkpoint is a directory holding
///   meta.json    format_version, dtype, model config, and the ordered list of
///                {name, shape, offset} entries (offset in bytes)
///   weights.bin  every parameter and buffer, little-endian, back to back
template <typename T>
void save_model(const Detector<T>& model, const std::filesystem::path& dir);

/// Rebuilds the model from its stored config and overwrites every parameter.
/// Throws LoadError naming the first offending entry.
template <typename T>
std::unique_ptr<Detector<T>> load_model(const std::filesystem::path& dir);

/// Only the stored config, without reading weights.
ModelConfig load_model_config(const std::filesystem::path& dir);

}  // namespace deepshield::transformer
