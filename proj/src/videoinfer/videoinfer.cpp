#include "deepshield/videoinfer/videoinfer.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <thread>
#include <unordered_map>

#include "deepshield/errors.hpp"
#include "deepshield/json_util.hpp"

namespace deepshield::videoinfer {

std::string to_string(Rule rule) { return rule == Rule::voting ? "voting" : "average"; }

Rule parse_rule(const std::string& text) {
  if (text == "voting") return Rule::voting;
  if (text == "average") return Rule::average;
  throw ConfigError("unknown aggregation rule '" + text + "' (expected voting or average)");
}

void InferenceConfig::validate(const std::string& path) const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError(path + ".threshold must lie in (0,1)");
  if (max_faces < 1) throw ConfigError(path + ".max_faces must be at least 1");
  if (batch_size < 1) throw ConfigError(path + ".batch_size must be at least 1");
}

nlohmann::json to_json(const InferenceConfig& c) {
  return {{"threshold", c.threshold}, {"max_faces", c.max_faces}, {"rule", to_string(c.rule)},
          {"batch_size", c.batch_size}};
}

InferenceConfig inference_from_json(const nlohmann::json& j, const std::string& path) {
  json::ObjectReader r(j, path);
  InferenceConfig c;
  r.optional("threshold", c.threshold);
  r.optional("max_faces", c.max_faces);
  if (r.has("rule")) {
    std::string rule;
    r.required("rule", rule);
    c.rule = parse_rule(rule);
  }
  r.optional("batch_size", c.batch_size);
  r.finish();
  c.validate(path);
  return c;
}

nlohmann::json to_json(const VideoVerdict& v) {
  nlohmann::json aggregates = nlohmann::json::array();
  for (const auto& a : v.aggregates) {
    aggregates.push_back({{"actor_id", a.actor_id}, {"mean_prob", a.mean_prob}, {"face_count", a.face_count}});
  }
  nlohmann::json j;
  j["video_id"] = v.video_id;
  j["verdict"] = v.fake ? "fake" : "real";
  j["rule"] = to_string(v.rule);
  j["max_actor_score"] = v.max_actor_score;
  j["mean_score"] = v.mean_score;
  j["video_score"] = v.video_score();
  j["faces_used"] = v.faces_used;
  j["aggregates"] = std::move(aggregates);
  return j;
}

VideoVerdict verdict_from_json(const nlohmann::json& j, const std::string& where) {
  try {
    json::ObjectReader r(j, "");
    VideoVerdict v;
    std::string verdict, rule;
    double video_score = 0;
    r.required("video_id", v.video_id);
    r.required("verdict", verdict);
    r.required("rule", rule);
    r.required("max_actor_score", v.max_actor_score);
    r.required("mean_score", v.mean_score);
    r.required("video_score", video_score);
    r.required("faces_used", v.faces_used);
    for (const auto& a : r.child("aggregates")) {
      json::ObjectReader ar(a, "aggregates[]");
      ActorAggregate agg;
      ar.required("actor_id", agg.actor_id);
      ar.required("mean_prob", agg.mean_prob);
      ar.required("face_count", agg.face_count);
      ar.finish();
      v.aggregates.push_back(std::move(agg));
    }
    r.finish();
    if (verdict != "fake" && verdict != "real") throw ConfigError("verdict must be fake or real");
    v.fake = verdict == "fake";
    v.rule = parse_rule(rule);
    return v;
  } catch (const ConfigError& e) {
    throw LoadError(where + ": " + e.what());
  }
}

nlohmann::json to_json(const FaceScore& s) {
  return {{"video_id", s.video_id}, {"actor_id", s.actor_id}, {"frame_index", s.frame_index}, {"prob", s.prob}};
}

namespace {

bool frame_actor_less(const data::FaceRecord& a, const data::FaceRecord& b) {
  if (a.frame_index != b.frame_index) return a.frame_index < b.frame_index;
  return a.actor_id < b.actor_id;
}

}  // namespace

std::vector<data::FaceRecord> sample_faces(std::vector<data::FaceRecord> records, std::size_t max_faces) {
  if (records.empty()) throw InputError("cannot sample faces from an empty record set");
  if (max_faces < 1) throw ConfigError("max_faces must be at least 1");
  for (const auto& r : records) {
    if (r.video_id != records.front().video_id) {
      throw InputError("sample_faces given records of two videos: " + records.front().video_id + " and " + r.video_id);
    }
  }
  std::stable_sort(records.begin(), records.end(), frame_actor_less);
  const std::size_t n = records.size();
  if (n <= max_faces) return records;

  const std::size_t m = max_faces;
  std::vector<bool> taken(n, false);
  std::size_t count = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t idx = k * n / m;
    if (!taken[idx]) {
      taken[idx] = true;
      ++count;
    }
  }
  for (std::size_t i = 0; i < n && count < m; ++i) {
    if (!taken[i]) {
      taken[i] = true;
      ++count;
    }
  }
  std::vector<data::FaceRecord> out;
  out.reserve(m);
  for (std::size_t i = 0; i < n; ++i) {
    if (taken[i]) out.push_back(std::move(records[i]));
  }
  return out;
}

FaceScorer detector_scorer(const transformer::Detector<float>& model) {
  return [&model](const Tensor<float>& images) {
    NoGradGuard guard;
    const auto out = model.forward(Var<float>(images), ForwardMode::eval());
    const auto& probs = out.probs.value();
    std::vector<double> scores(probs.numel());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = probs[i];
    return scores;
  };
}

std::vector<FaceScore> score_faces(const FaceScorer& scorer, const ScoringInputs& inputs,
                                   const std::vector<std::size_t>& records, std::size_t batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  const auto& manifest = *inputs.manifest;
  std::vector<FaceScore> out;
  out.reserve(records.size());
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const std::vector<std::size_t> group(records.begin() + static_cast<std::ptrdiff_t>(start),
                                         records.begin() + static_cast<std::ptrdiff_t>(
                                                               std::min(records.size(), start + batch_size)));
    const auto batch =
        data::assemble_batch(manifest, *inputs.cache, group, inputs.image_size, 0, nullptr, inputs.normalization);
    const auto probs = scorer(batch.images);
    if (probs.size() != group.size()) {
      throw ContractError("scorer returned " + std::to_string(probs.size()) + " scores for " +
                          std::to_string(group.size()) + " faces");
    }
    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto& r = manifest.records[group[i]];
      if (!std::isfinite(probs[i])) throw NumericError("non-finite score for face " + r.key());
      out.push_back({r.video_id, r.actor_id, r.frame_index, probs[i]});
    }
  }
  return out;
}

VideoVerdict aggregate_video(const std::vector<FaceScore>& scores, const InferenceConfig& config) {
  if (scores.empty()) throw InputError("cannot aggregate a video with no face scores");
  std::vector<const FaceScore*> sorted;
  sorted.reserve(scores.size());
  for (const auto& s : scores) {
    if (s.video_id != scores.front().video_id) {
      throw InputError("aggregate_video given scores of two videos: " + scores.front().video_id + " and " +
                       s.video_id);
    }
    sorted.push_back(&s);
  }
  std::sort(sorted.begin(), sorted.end(), [](const FaceScore* a, const FaceScore* b) {
    if (a->frame_index != b->frame_index) return a->frame_index < b->frame_index;
    if (a->actor_id != b->actor_id) return a->actor_id < b->actor_id;
    return a->prob < b->prob;
  });

  std::map<std::string, std::pair<double, std::size_t>> per_actor;
  double total = 0;
  for (const auto* s : sorted) {
    auto& [sum, count] = per_actor[s->actor_id];
    sum += s->prob;
    ++count;
    total += s->prob;
  }

  VideoVerdict v;
  v.video_id = scores.front().video_id;
  v.rule = config.rule;
  v.faces_used = scores.size();
  v.mean_score = total / static_cast<double>(scores.size());
  v.max_actor_score = -1;
  for (const auto& [actor, acc] : per_actor) {
    const double mean = acc.first / static_cast<double>(acc.second);
    v.aggregates.push_back({actor, mean, acc.second});
    v.max_actor_score = std::max(v.max_actor_score, mean);
  }
  v.fake = v.video_score() >= config.threshold;
  return v;
}

std::size_t default_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DEEPSHIELD_THREADS")) {
    std::size_t cap = 0;
    const char* end = env + std::char_traits<char>::length(env);
    const auto [ptr, ec] = std::from_chars(env, end, cap);
    if (ec != std::errc() || ptr != end || cap == 0) {
      throw ConfigError(std::string("DEEPSHIELD_THREADS must be a positive integer, got '") + env + "'");
    }
    n = std::min(n, cap);
  }
  return n;
}

namespace {

struct VideoGroups {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::size_t>> members;
};

VideoGroups group_by_video(const data::Manifest& manifest) {
  if (manifest.records.empty()) throw InputError("manifest has no faces to score");
  VideoGroups g;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& id = manifest.records[i].video_id;
    auto [it, fresh] = g.members.try_emplace(id);
    if (fresh) g.order.push_back(id);
    it->second.push_back(i);
  }
  return g;
}

// sample_faces works on records; the survivors map back to manifest indices
// through their unique key.
std::vector<std::size_t> sampled_indices(const data::Manifest& manifest, const std::vector<std::size_t>& indices,
                                         std::size_t max_faces) {
  std::vector<data::FaceRecord> recs;
  recs.reserve(indices.size());
  std::unordered_map<std::string, std::size_t> by_key;
  for (std::size_t i : indices) {
    recs.push_back(manifest.records[i]);
    by_key.emplace(manifest.records[i].key(), i);
  }
  std::vector<std::size_t> chosen;
  for (const auto& r : sample_faces(std::move(recs), max_faces)) chosen.push_back(by_key.at(r.key()));
  return chosen;
}

}  // namespace

InferenceResult infer_videos(const FaceScorer& scorer, const ScoringInputs& inputs, const InferenceConfig& config,
                             std::size_t threads) {
  config.validate();
  const auto& manifest = *inputs.manifest;
  const auto groups = group_by_video(manifest);
  const auto& order = groups.order;

  std::vector<std::vector<FaceScore>> faces(order.size());
  std::vector<VideoVerdict> verdicts(order.size());
  auto run_video = [&](std::size_t v) {
    const auto chosen = sampled_indices(manifest, groups.members.at(order[v]), config.max_faces);
    faces[v] = score_faces(scorer, inputs, chosen, config.batch_size);
    verdicts[v] = aggregate_video(faces[v], config);
  };

  if (threads == 0) threads = default_threads();
  threads = std::min(threads, order.size());
  if (threads <= 1) {
    for (std::size_t v = 0; v < order.size(); ++v) run_video(v);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t v = next++; v < order.size(); v = next++) run_video(v);
        } catch (...) {
          errors[t] = std::current_exception();
          next = order.size();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  InferenceResult result;
  result.verdicts = std::move(verdicts);
  for (auto& f : faces) result.faces.insert(result.faces.end(), f.begin(), f.end());
  return result;
}

InferenceResult verdicts_from_scores(const data::Manifest& manifest, const std::vector<double>& record_probs,
                                     const InferenceConfig& config) {
  config.validate();
  if (record_probs.size() != manifest.records.size()) {
    throw InputError("got " + std::to_string(record_probs.size()) + " scores for " +
                     std::to_string(manifest.records.size()) + " records");
  }
  const auto groups = group_by_video(manifest);
  InferenceResult result;
  for (const auto& id : groups.order) {
    std::vector<FaceScore> faces;
    for (std::size_t i : sampled_indices(manifest, groups.members.at(id), config.max_faces)) {
      const auto& r = manifest.records[i];
      faces.push_back({r.video_id, r.actor_id, r.frame_index, record_probs[i]});
    }
    result.verdicts.push_back(aggregate_video(faces, config));
    result.faces.insert(result.faces.end(), faces.begin(), faces.end());
  }
  return result;
}

std::string format_verdicts(const std::vector<VideoVerdict>& verdicts) {
  std::string out;
  for (const auto& v : verdicts) out += to_json(v).dump() + "\n";
  return out;
}

std::string format_face_scores(const std::vector<FaceScore>& faces) {
  std::string out;
  for (const auto& f : faces) out += to_json(f).dump() + "\n";
  return out;
}

std::vector<VideoVerdict> load_verdicts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open verdicts file " + path.string());
  std::vector<VideoVerdict> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(where + ": malformed JSON: " + e.what());
    }
    out.push_back(verdict_from_json(j, where));
  }
  return out;
}

}  // namespace deepshield::videoinfer
