#pragma once

#include <json.hpp>
#include <set>
#include <string>

#include "deepshield/errors.hpp"

namespace deepshield::json {

using nlohmann::json;

/// Reads one JSON object field by field and rejects any key that was never
/// asked for. Error messages carry the dotted path of the offending field.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return object_.contains(key); }

  template <typename V>
  void required(const std::string& key, V& out) {
    if (!object_.contains(key)) throw ConfigError("missing required field " + field(key));
    read(key, out);
  }

  template <typename V>
  void optional(const std::string& key, V& out) {
    if (object_.contains(key)) read(key, out);
  }

  /// Returns the raw child and marks it as consumed.
  const json& child(const std::string& key) {
    if (!object_.contains(key)) throw ConfigError("missing required field " + field(key));
    seen_.insert(key);
    return object_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : object_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown field " + field(key));
    }
  }

 private:
  std::string where() const { return path_.empty() ? "document" : path_; }

  template <typename V>
  void read(const std::string& key, V& out) {
    seen_.insert(key);
    const json& value = object_.at(key);
    try {
      if constexpr (std::is_unsigned_v<V> && !std::is_same_v<V, bool>) {
        if (!value.is_number_integer() || value.get<long long>() < 0) {
          throw ConfigError(field(key) + " must be a non-negative integer");
        }
      }
      out = value.get<V>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace deepshield::json
