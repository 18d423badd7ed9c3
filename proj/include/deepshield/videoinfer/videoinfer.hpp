#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepshield/data/batching.hpp"
#include "deepshield/data/manifest.hpp"
#include "deepshield/transformer/models.hpp"

namespace deepshield::videoinfer {

enum class Rule { voting, average };

std::string to_string(Rule rule);
Rule parse_rule(const std::string& text);

struct InferenceConfig {
  double threshold = 0.55;
  std::size_t max_faces = 30;
  Rule rule = Rule::voting;
  std::size_t batch_size = 32;

  void validate(const std::string& path = "inference") const;
  friend bool operator==(const InferenceConfig&, const InferenceConfig&) = default;
};

nlohmann::json to_json(const InferenceConfig& c);
InferenceConfig inference_from_json(const nlohmann::json& j, const std::string& path);

struct FaceScore {
  std::string video_id;
  std::string actor_id;
  std::uint64_t frame_index = 0;
  double prob = 0;
};

struct ActorAggregate {
  std::string actor_id;
  double mean_prob = 0;
  std::size_t face_count = 0;
};

struct VideoVerdict {
  std::string video_id;
  std::vector<ActorAggregate> aggregates;  // sorted by actor_id
  double max_actor_score = 0;
  double mean_score = 0;  // over all faces regardless of actor
  bool fake = false;
  Rule rule = Rule::voting;
  std::size_t faces_used = 0;

  /// The continuous score the verdict thresholds: max actor mean for voting,
  /// global mean for average.
  double video_score() const { return rule == Rule::voting ? max_actor_score : mean_score; }
};

nlohmann::json to_json(const VideoVerdict& v);
VideoVerdict verdict_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json to_json(const FaceScore& s);

/// Caps one video's faces at max_faces by uniform spacing over the
/// (frame_index, actor_id) order: positions floor(k*n/m), k = 0..m-1.
/// Returns the selection in sorted order.
std::vector<data::FaceRecord> sample_faces(std::vector<data::FaceRecord> records, std::size_t max_faces);

/// Maps a standardized image batch [B,3,S,S] to B fake probabilities.
using FaceScorer = std::function<std::vector<double>(const Tensor<float>& images)>;

/// Eval-mode forward of a detector with gradient recording off.
FaceScorer detector_scorer(const transformer::Detector<float>& model);

struct ScoringInputs {
  const data::Manifest* manifest = nullptr;
  const data::ImageCache* cache = nullptr;
  std::size_t image_size = 64;
  data::Normalization normalization;
};

/// One FaceScore per record index, in input order.
std::vector<FaceScore> score_faces(const FaceScorer& scorer, const ScoringInputs& inputs,
                                   const std::vector<std::size_t>& records, std::size_t batch_size);

/// Groups by actor, averages over time, then applies the rule. The threshold
/// comparison is inclusive. Summation order is canonical, so the result does
/// not depend on the order of `scores`.
VideoVerdict aggregate_video(const std::vector<FaceScore>& scores, const InferenceConfig& config);

struct InferenceResult {
  std::vector<VideoVerdict> verdicts;  // order of first appearance
  std::vector<FaceScore> faces;        // per video, sampled order
};

/// Per video: sample_faces -> score_faces -> aggregate_video. Videos are
/// scored on up to `threads` workers; 0 means default_threads().
InferenceResult infer_videos(const FaceScorer& scorer, const ScoringInputs& inputs, const InferenceConfig& config,
                             std::size_t threads = 0);

/// The same per-video procedure on scores computed beforehand, one per
/// manifest record (e.g. a full scoring pass reused under several caps).
InferenceResult verdicts_from_scores(const data::Manifest& manifest, const std::vector<double>& record_probs,
                                     const InferenceConfig& config);

/// hardware_concurrency, capped by DEEPSHIELD_THREADS when set.
std::size_t default_threads();

std::string format_verdicts(const std::vector<VideoVerdict>& verdicts);
std::string format_face_scores(const std::vector<FaceScore>& faces);
std::vector<VideoVerdict> load_verdicts(const std::filesystem::path& path);

}  // namespace deepshield::videoinfer
