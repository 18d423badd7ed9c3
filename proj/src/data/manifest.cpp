#include "deepshield/data/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "deepshield/data/image.hpp"
#include "deepshield/errors.hpp"

namespace deepshield::data {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw ConfigError("split must be train, val or test, got '" + text + "'");
}

std::string FaceRecord::key() const {
  return "(" + video_id + ", " + std::to_string(frame_index) + ", " + actor_id + ")";
}

namespace {

FaceRecord parse_record(const std::string& line, const std::string& where) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw LoadError(where + ": malformed JSON: " + e.what());
  }
  if (!j.is_object()) throw LoadError(where + ": record must be a JSON object");
  static const char* const kFields[] = {"video_id", "frame_index", "actor_id", "label", "image_path"};
  for (const char* f : kFields) {
    if (!j.contains(f)) throw LoadError(where + ": missing field '" + f + "'");
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kFields), std::end(kFields), key) == std::end(kFields)) {
      throw LoadError(where + ": unknown field '" + key + "'");
    }
  }
  FaceRecord r;
  if (!j["video_id"].is_string() || !j["actor_id"].is_string() || !j["image_path"].is_string()) {
    throw LoadError(where + ": video_id, actor_id and image_path must be strings");
  }
  r.video_id = j["video_id"].get<std::string>();
  r.actor_id = j["actor_id"].get<std::string>();
  r.image_path = j["image_path"].get<std::string>();
  if (!j["frame_index"].is_number_integer() || j["frame_index"].get<long long>() < 0) {
    throw LoadError(where + ": frame_index must be a non-negative integer");
  }
  r.frame_index = j["frame_index"].get<std::uint64_t>();
  const json& label = j["label"];
  if (!label.is_number_integer() || (label.get<long long>() != 0 && label.get<long long>() != 1)) {
    throw LoadError(where + ": label must be 0 or 1, got " + label.dump());
  }
  r.label = label.get<int>();
  return r;
}

}  // namespace

Manifest load_manifest(const fs::path& path, ManifestOptions options) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  Manifest m;
  std::unordered_set<std::string> keys;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    FaceRecord r = parse_record(line, where);
    if (!keys.insert(r.key()).second) throw LoadError(where + ": duplicate record key " + r.key());
    const fs::path img(r.image_path);
    r.resolved_path = img.is_absolute() ? img : base / img;
    if (options.check_images) {
      if (!fs::exists(r.resolved_path)) throw LoadError(where + ": image not found: " + r.resolved_path.string());
      const auto [w, h] = png_size(r.resolved_path);
      if (w != h) {
        throw LoadError(where + ": image " + r.image_path + " is not square (" + std::to_string(w) + "x" +
                        std::to_string(h) + ")");
      }
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

std::string format_manifest(const Manifest& manifest) {
  std::string out;
  for (const auto& r : manifest.records) {
    // Field order is fixed so manifests diff cleanly.
    out += "{\"video_id\":" + json(r.video_id).dump() + ",\"frame_index\":" + std::to_string(r.frame_index) +
           ",\"actor_id\":" + json(r.actor_id).dump() + ",\"label\":" + std::to_string(r.label) +
           ",\"image_path\":" + json(r.image_path).dump() + "}\n";
  }
  return out;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  const std::string text = format_manifest(manifest);
  write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::vector<VideoLabel> video_labels(const Manifest& manifest) {
  std::vector<VideoLabel> out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& r : manifest.records) {
    auto [it, inserted] = index.emplace(r.video_id, out.size());
    if (inserted) out.push_back({r.video_id, 0});
    out[it->second].label = std::max(out[it->second].label, r.label);
  }
  return out;
}

std::string format_labels(const std::vector<VideoLabel>& labels) {
  std::string out;
  for (const auto& l : labels) {
    out += "{\"video_id\":" + json(l.video_id).dump() + ",\"label\":" + std::to_string(l.label) + "}\n";
  }
  return out;
}

std::vector<VideoLabel> load_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open labels file " + path.string());
  std::vector<VideoLabel> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw LoadError(where + ": malformed JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("video_id") || !j["video_id"].is_string() || !j.contains("label")) {
      throw LoadError(where + ": expected {\"video_id\": string, \"label\": 0|1}");
    }
    const json& label = j["label"];
    if (!label.is_number_integer() || (label.get<long long>() != 0 && label.get<long long>() != 1)) {
      throw LoadError(where + ": label must be 0 or 1, got " + label.dump());
    }
    VideoLabel v{j["video_id"].get<std::string>(), label.get<int>()};
    if (!seen.insert(v.video_id).second) throw LoadError(where + ": duplicate video_id " + v.video_id);
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace deepshield::data
