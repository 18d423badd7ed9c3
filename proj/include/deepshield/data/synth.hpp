#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "deepshield/data/image.hpp"
#include "deepshield/data/manifest.hpp"
#include "deepshield/data/seeding.hpp"

namespace deepshield::data {

enum class ArtifactKind { blend_boundary, checkerboard, local_blur, warp_patch };

std::string to_string(ArtifactKind kind);
ArtifactKind parse_artifact(const std::string& text);
std::vector<ArtifactKind> all_artifacts();

struct SynthConfig {
  std::string name = "synth";  // video_id prefix
  std::size_t n_videos = 100;
  std::size_t frames_per_video = 10;
  std::size_t actors_min = 1;
  std::size_t actors_max = 2;
  double fake_fraction = 0.5;
  std::vector<ArtifactKind> artifacts = all_artifacts();
  std::size_t image_size = 64;
  std::uint64_t seed = 0;

  void validate(const std::string& path = "synth") const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_from_json(const nlohmann::json& j, const std::string& path);

/// floor(n * fraction + 1/2).
std::size_t fake_video_count(std::size_t n_videos, double fake_fraction);

/// Identity-level appearance, fixed for every frame of an actor.
struct ActorAppearance {
  std::size_t size = 64;
  std::array<float, 3> background_a{}, background_b{};
  double background_angle = 0;
  double center_y = 0, center_x = 0;  // pixels
  double radius_y = 0, radius_x = 0;
  std::array<float, 3> skin{}, eye{}, mouth{};
  double eye_radius = 0;
  std::vector<float> coarse;  // 9x9 lattice in [-1,1]
  std::vector<float> fine;    // size x size, in [-1,1]
  double coarse_amplitude = 0.06;
  double fine_amplitude = 0.05;
};

/// Per-frame pose and lighting change plus the seed of that frame's sensor noise.
struct FrameJitter {
  double shift_y = 0, shift_x = 0;
  double brightness = 0;
  double noise_sigma = 0.01;
  std::uint64_t noise_seed = 0;
};

/// Placement and strength of one manipulation; fixed for a whole fake track.
struct ArtifactPlacement {
  ArtifactKind kind = ArtifactKind::checkerboard;
  double offset_y = 0, offset_x = 0;  // from the face center, pixels
  double half_size = 0;               // half side of the square patch, pixels
  double strength = 0;                // amplitude (checkerboard, seam), shift (blend), pixels (warp)
  double wavelength = 8;              // warp only
};

struct Rect {
  std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open
};

ActorAppearance sample_actor(std::mt19937_64& rng, std::size_t size);
FrameJitter sample_jitter(std::mt19937_64& rng, std::size_t size);
ArtifactPlacement sample_artifact(ArtifactKind kind, std::mt19937_64& rng, std::size_t size);

/// Clean frame before sensor noise.
Image render_face(const ActorAppearance& actor, const FrameJitter& jitter);
/// The square patch an artifact touches in a given frame (for blend_boundary,
/// the bounding box of the blend ellipse).
Rect artifact_region(const ActorAppearance& actor, const FrameJitter& jitter, const ArtifactPlacement& artifact);
void apply_artifact(Image& image, const ActorAppearance& actor, const FrameJitter& jitter,
                    const ArtifactPlacement& artifact);
void apply_sensor_noise(Image& image, const FrameJitter& jitter);

/// Full frame: render, optional artifact, sensor noise, clamp.
Image render_frame(const ActorAppearance& actor, const FrameJitter& jitter, const ArtifactPlacement* artifact);

struct CorpusSummary {
  std::size_t videos = 0;
  std::size_t fake_videos = 0;
  std::size_t faces = 0;
  std::size_t fake_faces = 0;
  std::map<std::string, std::size_t> artifact_tracks;
  std::string content_hash;
  bool unchanged = false;  // an identical corpus was already present
};

/// Writes images/, manifest.jsonl, labels.jsonl and corpus_meta.json under
/// out_dir. In a fake video exactly one actor carries an artifact; artifact
/// kinds cycle through config.artifacts across fake videos.
CorpusSummary synthesize_corpus(const SynthConfig& config, const std::filesystem::path& out_dir,
                                Manifest* manifest = nullptr);

}  // namespace deepshield::data
