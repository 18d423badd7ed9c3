#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace deepshield::data {

enum class Split { train, val, test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

/// One face crop. `image_path` is stored as written in the manifest;
/// `resolved_path` is the file actually read (relative paths are taken from
/// the manifest's directory).
struct FaceRecord {
  std::string video_id;
  std::uint64_t frame_index = 0;
  std::string actor_id;
  int label = 0;
  std::string image_path;
  std::filesystem::path resolved_path;

  std::string key() const;
};

struct Manifest {
  std::vector<FaceRecord> records;
  Split split = Split::train;
};

struct ManifestOptions {
  /// Open each referenced image header to confirm it exists and is square.
  bool check_images = true;
};

/// JSON-Lines manifest, one FaceRecord per line with exactly the fields
/// video_id, frame_index, actor_id, label, image_path. Blank lines are skipped.
/// Throws LoadError with the 1-based line number on the first bad record.
Manifest load_manifest(const std::filesystem::path& path, ManifestOptions options = {});

/// Serializes records in order; the output of write_manifest is byte-stable.
std::string format_manifest(const Manifest& manifest);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Video-level ground truth: a video is fake iff any of its faces is fake.
struct VideoLabel {
  std::string video_id;
  int label = 0;
};

/// One entry per distinct video in order of first appearance.
std::vector<VideoLabel> video_labels(const Manifest& manifest);
std::string format_labels(const std::vector<VideoLabel>& labels);
/// JSON-Lines {video_id, label}.
std::vector<VideoLabel> load_labels(const std::filesystem::path& path);

}  // namespace deepshield::data
