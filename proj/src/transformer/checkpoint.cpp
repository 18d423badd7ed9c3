#include "deepshield/transformer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "deepshield/errors.hpp"

namespace deepshield::transformer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

template <typename U>
void put_le(std::vector<unsigned char>& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <typename U>
U get_le(const unsigned char* p) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return bits;
}

template <typename T>
void encode(std::vector<unsigned char>& out, T value) {
  if constexpr (sizeof(T) == 4) {
    put_le(out, std::bit_cast<std::uint32_t>(value));
  } else {
    put_le(out, std::bit_cast<std::uint64_t>(value));
  }
}

template <typename T, typename Stored>
T decode(const unsigned char* p) {
  if constexpr (sizeof(Stored) == 4) {
    return static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(p)));
  } else {
    return static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(p)));
  }
}

json read_meta(const fs::path& dir) {
  const fs::path path = dir / "meta.json";
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open checkpoint metadata " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": malformed JSON: " + e.what());
  }
}

void check_version(const json& meta, const fs::path& dir) {
  if (!meta.is_object() || !meta.contains("format_version") || !meta["format_version"].is_number_integer()) {
    throw LoadError(dir.string() + ": meta.json has no integer format_version");
  }
  const int version = meta["format_version"].get<int>();
  if (version != kCheckpointVersion) {
    throw LoadError(dir.string() + ": format_version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
}

}  // namespace

template <typename T>
void save_model(const Detector<T>& model, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  std::vector<unsigned char> bytes;
  json entries = json::array();
  for (const auto& p : model.params().entries()) {
    const Tensor<T>& v = p.value.value();
    entries.push_back({{"name", p.name}, {"shape", v.shape()}, {"offset", bytes.size()}});
    for (T x : v.data()) encode(bytes, x);
  }
  json meta{{"format_version", kCheckpointVersion},
            {"dtype", dtype_name<T>()},
            {"config", to_json(model.config())},
            {"parameters", entries},
            {"weights_bytes", bytes.size()}};

  std::ofstream meta_out(dir / "meta.json", std::ios::trunc);
  meta_out << meta.dump(2) << '\n';
  std::ofstream weights_out(dir / "weights.bin", std::ios::binary | std::ios::trunc);
  weights_out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!meta_out || !weights_out) throw IoError("failed writing checkpoint " + dir.string());
}

ModelConfig load_model_config(const fs::path& dir) {
  const json meta = read_meta(dir);
  check_version(meta, dir);
  if (!meta.contains("config")) throw LoadError(dir.string() + ": meta.json has no config");
  try {
    ModelConfig config = model_from_json(meta["config"], "config");
    config.validate();
    return config;
  } catch (const ConfigError& e) {
    throw LoadError(dir.string() + ": stored config is invalid: " + e.what());
  }
}

template <typename T>
std::unique_ptr<Detector<T>> load_model(const fs::path& dir) {
  const json meta = read_meta(dir);
  check_version(meta, dir);
  const ModelConfig config = load_model_config(dir);

  const std::string dtype = meta.value("dtype", "");
  const bool stored32 = dtype == "float32";
  if (!stored32 && dtype != "float64") throw LoadError(dir.string() + ": unknown dtype '" + dtype + "'");
  if (!stored32 && sizeof(T) == 4) {
    throw LoadError(dir.string() + ": float64 checkpoint cannot be loaded at float32 precision");
  }
  const std::size_t width = stored32 ? 4 : 8;

  std::ifstream in(dir / "weights.bin", std::ios::binary);
  if (!in) throw LoadError("cannot open " + (dir / "weights.bin").string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

  auto model = make_detector<T>(config, 0);
  ParameterStore<T>& store = model->params();

  if (!meta.contains("parameters") || !meta["parameters"].is_array()) {
    throw LoadError(dir.string() + ": meta.json has no parameter list");
  }
  std::unordered_map<std::string, bool> loaded;
  for (const auto& p : store.entries()) loaded.emplace(p.name, false);

  for (const auto& entry : meta["parameters"]) {
    const std::string name = entry.value("name", "");
    if (!store.contains(name)) throw LoadError("checkpoint entry '" + name + "' does not exist in the model");
    Tensor<T>& target = store.at(name).mutable_value();
    Shape shape;
    try {
      shape = entry.at("shape").get<Shape>();
    } catch (const json::exception&) {
      throw LoadError("checkpoint entry '" + name + "' has a malformed shape");
    }
    if (shape != target.shape()) {
      throw LoadError("checkpoint entry '" + name + "' has shape " + shape_str(shape) + " but the model expects " +
                      shape_str(target.shape()));
    }
    const std::size_t offset = entry.value("offset", std::size_t{0});
    const std::size_t count = target.numel();
    if (offset + count * width > bytes.size()) {
      throw LoadError("checkpoint entry '" + name + "' extends past the end of weights.bin (" +
                      std::to_string(bytes.size()) + " bytes); the file is truncated");
    }
    T* dst = target.raw();
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned char* src = bytes.data() + offset + i * width;
      dst[i] = stored32 ? decode<T, float>(src) : decode<T, double>(src);
    }
    loaded[name] = true;
  }
  for (const auto& p : store.entries()) {
    if (!loaded[p.name]) throw LoadError("model parameter '" + p.name + "' is missing from the checkpoint");
  }
  const std::size_t expected = meta.value("weights_bytes", bytes.size());
  if (expected != bytes.size()) {
    throw LoadError(dir.string() + ": weights.bin holds " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(expected));
  }
  return model;
}

template void save_model(const Detector<float>&, const fs::path&);
template void save_model(const Detector<double>&, const fs::path&);
template std::unique_ptr<Detector<float>> load_model(const fs::path&);
template std::unique_ptr<Detector<double>> load_model(const fs::path&);

}  // namespace deepshield::transformer
