#include "deepshield/data/synth.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>
#include <optional>

#include "deepshield/errors.hpp"
#include "deepshield/json_util.hpp"

namespace deepshield::data {

namespace fs = std::filesystem;

std::string to_string(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::blend_boundary: return "blend_boundary";
    case ArtifactKind::checkerboard: return "checkerboard";
    case ArtifactKind::local_blur: return "local_blur";
    case ArtifactKind::warp_patch: return "warp_patch";
  }
  return "checkerboard";
}

ArtifactKind parse_artifact(const std::string& text) {
  for (ArtifactKind k : all_artifacts())
    if (to_string(k) == text) return k;
  throw ConfigError("unknown artifact kind '" + text +
                    "' (expected blend_boundary, checkerboard, local_blur or warp_patch)");
}

std::vector<ArtifactKind> all_artifacts() {
  return {ArtifactKind::blend_boundary, ArtifactKind::checkerboard, ArtifactKind::local_blur,
          ArtifactKind::warp_patch};
}

void SynthConfig::validate(const std::string& path) const {
  if (name.empty()) throw ConfigError(path + ".name must not be empty");
  if (n_videos == 0) throw ConfigError(path + ".n_videos must be positive");
  if (frames_per_video == 0) throw ConfigError(path + ".frames_per_video must be positive");
  if (actors_min == 0 || actors_max < actors_min) {
    throw ConfigError(path + ".actors_min/actors_max must satisfy 1 <= actors_min <= actors_max");
  }
  if (!(fake_fraction >= 0.0 && fake_fraction <= 1.0)) {
    throw ConfigError(path + ".fake_fraction must lie in [0,1], got " + std::to_string(fake_fraction));
  }
  if (fake_fraction > 0 && artifacts.empty()) throw ConfigError(path + ".artifacts must not be empty");
  if (image_size < 16) throw ConfigError(path + ".image_size must be at least 16");
}

nlohmann::json to_json(const SynthConfig& c) {
  std::vector<std::string> kinds;
  for (auto k : c.artifacts) kinds.push_back(to_string(k));
  return {{"name", c.name},
          {"n_videos", c.n_videos},
          {"frames_per_video", c.frames_per_video},
          {"actors_min", c.actors_min},
          {"actors_max", c.actors_max},
          {"fake_fraction", c.fake_fraction},
          {"artifacts", kinds},
          {"image_size", c.image_size},
          {"seed", c.seed}};
}

SynthConfig synth_from_json(const nlohmann::json& j, const std::string& path) {
  json::ObjectReader r(j, path);
  SynthConfig c;
  r.optional("name", c.name);
  r.optional("n_videos", c.n_videos);
  r.optional("frames_per_video", c.frames_per_video);
  r.optional("actors_min", c.actors_min);
  r.optional("actors_max", c.actors_max);
  r.optional("fake_fraction", c.fake_fraction);
  if (r.has("artifacts")) {
    std::vector<std::string> kinds;
    r.optional("artifacts", kinds);
    c.artifacts.clear();
    try {
      for (const auto& k : kinds) c.artifacts.push_back(parse_artifact(k));
    } catch (const ConfigError& e) {
      throw ConfigError(r.field("artifacts") + ": " + e.what());
    }
  }
  r.optional("image_size", c.image_size);
  r.optional("seed", c.seed);
  r.finish();
  c.validate(path);
  return c;
}

std::size_t fake_video_count(std::size_t n_videos, double fake_fraction) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n_videos) * fake_fraction + 0.5));
}

namespace {

double uni(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::array<float, 3> random_color(std::mt19937_64& rng, double lo, double hi) {
  return {static_cast<float>(uni(rng, lo, hi)), static_cast<float>(uni(rng, lo, hi)),
          static_cast<float>(uni(rng, lo, hi))};
}

/// Coverage of an ellipse edge with ~1 px of anti-aliasing.
double coverage(double dy, double dx, double ry, double rx) {
  const double n = std::sqrt((dy * dy) / (ry * ry) + (dx * dx) / (rx * rx));
  return std::clamp((1.0 - n) * std::min(ry, rx) + 0.5, 0.0, 1.0);
}

double lattice(const std::vector<float>& grid, double u, double v) {
  constexpr std::size_t n = 9;
  u = std::clamp(u, 0.0, static_cast<double>(n - 1));
  v = std::clamp(v, 0.0, static_cast<double>(n - 1));
  const auto i0 = std::min(static_cast<std::size_t>(u), n - 2), j0 = std::min(static_cast<std::size_t>(v), n - 2);
  const double fu = u - static_cast<double>(i0), fv = v - static_cast<double>(j0);
  const double a = grid[i0 * n + j0] * (1 - fv) + grid[i0 * n + j0 + 1] * fv;
  const double b = grid[(i0 + 1) * n + j0] * (1 - fv) + grid[(i0 + 1) * n + j0 + 1] * fv;
  return a * (1 - fu) + b * fu;
}

float sample(const Image& img, std::size_t c, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const auto y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  return static_cast<float>((img.at(c, y0, x0) * (1 - fx) + img.at(c, y0, x1) * fx) * (1 - fy) +
                            (img.at(c, y1, x0) * (1 - fx) + img.at(c, y1, x1) * fx) * fy);
}

struct BlendEllipse {
  double cy, cx, ry, rx, seam;
};

BlendEllipse blend_ellipse(const ActorAppearance& a, const FrameJitter& j, const ArtifactPlacement& p) {
  BlendEllipse e;
  e.cy = a.center_y + j.shift_y + 0.3 * p.offset_y;
  e.cx = a.center_x + j.shift_x + 0.3 * p.offset_x;
  e.ry = 0.75 * a.radius_y;
  e.rx = 0.75 * a.radius_x;
  e.seam = 1.5 / std::min(e.ry, e.rx);
  return e;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 unavailable");
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), digest, &len);
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
      std::snprintf(buf, sizeof buf, "%02x", digest[i]);
      out += buf;
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::string padded(std::size_t value, int width) {
  std::string s = std::to_string(value);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace

ActorAppearance sample_actor(std::mt19937_64& rng, std::size_t size) {
  const double s = static_cast<double>(size);
  ActorAppearance a;
  a.size = size;
  a.background_a = random_color(rng, 0.1, 0.9);
  a.background_b = random_color(rng, 0.1, 0.9);
  a.background_angle = uni(rng, 0.0, 2 * std::numbers::pi);
  a.center_y = s / 2 + uni(rng, -0.04, 0.04) * s;
  a.center_x = s / 2 + uni(rng, -0.04, 0.04) * s;
  a.radius_y = uni(rng, 0.34, 0.42) * s;
  a.radius_x = a.radius_y * uni(rng, 0.72, 0.85);
  const double r = uni(rng, 0.45, 0.95), g = r * uni(rng, 0.65, 0.85), b = g * uni(rng, 0.6, 0.9);
  a.skin = {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
  a.eye = random_color(rng, 0.05, 0.3);
  a.mouth = {static_cast<float>(uni(rng, 0.5, 0.8)), static_cast<float>(uni(rng, 0.1, 0.3)),
             static_cast<float>(uni(rng, 0.1, 0.3))};
  a.eye_radius = uni(rng, 0.045, 0.065) * s;
  a.coarse.resize(81);
  for (float& v : a.coarse) v = static_cast<float>(uni(rng, -1, 1));
  a.fine.resize(size * size);
  for (float& v : a.fine) v = static_cast<float>(uni(rng, -1, 1));
  return a;
}

FrameJitter sample_jitter(std::mt19937_64& rng, std::size_t size) {
  const double s = static_cast<double>(size);
  FrameJitter j;
  j.shift_y = uni(rng, -0.03, 0.03) * s;
  j.shift_x = uni(rng, -0.03, 0.03) * s;
  j.brightness = uni(rng, -0.04, 0.04);
  j.noise_seed = rng();
  return j;
}

ArtifactPlacement sample_artifact(ArtifactKind kind, std::mt19937_64& rng, std::size_t size) {
  const double s = static_cast<double>(size);
  ArtifactPlacement p;
  p.kind = kind;
  p.offset_y = uni(rng, -0.08, 0.08) * s;
  p.offset_x = uni(rng, -0.08, 0.08) * s;
  p.half_size = 0.14 * s;
  switch (kind) {
    case ArtifactKind::blend_boundary: p.strength = uni(rng, 0.09, 0.13); break;
    case ArtifactKind::checkerboard: p.strength = uni(rng, 0.07, 0.11); break;
    case ArtifactKind::local_blur:
      p.strength = 3;
      p.half_size = 0.22 * s;
      break;
    case ArtifactKind::warp_patch:
      p.strength = uni(rng, 3.5, 4.5) * s / 64;
      p.half_size = 0.2 * s;
      break;
  }
  p.wavelength = uni(rng, 5, 8) * s / 64;
  return p;
}

Image render_face(const ActorAppearance& a, const FrameJitter& j) {
  const std::size_t n = a.size;
  const double s = static_cast<double>(n);
  Image img(3, n, n);
  const double fcy = a.center_y + j.shift_y, fcx = a.center_x + j.shift_x;
  const double ca = std::cos(a.background_angle), sa = std::sin(a.background_angle);
  const double eye_y = fcy - 0.22 * a.radius_y, eye_dx = 0.38 * a.radius_x;
  const double mouth_y = fcy + 0.5 * a.radius_y, mouth_ry = 0.12 * a.radius_y, mouth_rx = 0.4 * a.radius_x;
  const auto shift_iy = static_cast<long>(std::lround(j.shift_y)), shift_ix = static_cast<long>(std::lround(j.shift_x));
  const auto ln = static_cast<long>(n);

  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double py = static_cast<double>(y), px = static_cast<double>(x);
      const double t = std::clamp(((px - s / 2) * ca + (py - s / 2) * sa) / s + 0.5, 0.0, 1.0);
      const double face = coverage(py - fcy, px - fcx, a.radius_y, a.radius_x);
      const double eye = std::max(coverage(py - eye_y, px - (fcx - eye_dx), a.eye_radius, a.eye_radius),
                                  coverage(py - eye_y, px - (fcx + eye_dx), a.eye_radius, a.eye_radius));
      const double mouth = coverage(py - mouth_y, px - fcx, mouth_ry, mouth_rx);
      // Texture is attached to the face, so it moves with the jitter.
      const double coarse = lattice(a.coarse, (py - j.shift_y) / s * 8, (px - j.shift_x) / s * 8);
      const long ty = ((static_cast<long>(y) - shift_iy) % ln + ln) % ln;
      const long tx = ((static_cast<long>(x) - shift_ix) % ln + ln) % ln;
      const double fine = a.fine[static_cast<std::size_t>(ty) * n + static_cast<std::size_t>(tx)];
      for (std::size_t c = 0; c < 3; ++c) {
        const double bg = a.background_a[c] * (1 - t) + a.background_b[c] * t;
        double skin = a.skin[c] * (1 + a.coarse_amplitude * coarse) + a.fine_amplitude * fine;
        skin = skin * (1 - eye) + a.eye[c] * eye;
        skin = skin * (1 - mouth) + a.mouth[c] * mouth;
        img.at(c, y, x) = static_cast<float>(bg * (1 - face) + skin * face + j.brightness);
      }
    }
  }
  return img;
}

Rect artifact_region(const ActorAppearance& a, const FrameJitter& j, const ArtifactPlacement& p) {
  const double limit = static_cast<double>(a.size);
  auto clip = [&](double v) { return static_cast<std::size_t>(std::clamp(std::round(v), 0.0, limit)); };
  if (p.kind == ArtifactKind::blend_boundary) {
    const BlendEllipse e = blend_ellipse(a, j, p);
    const double py = e.ry * (1 + e.seam) + 1, px = e.rx * (1 + e.seam) + 1;
    return {clip(e.cy - py), clip(e.cx - px), clip(e.cy + py + 1), clip(e.cx + px + 1)};
  }
  const double cy = a.center_y + j.shift_y + p.offset_y, cx = a.center_x + j.shift_x + p.offset_x;
  return {clip(cy - p.half_size), clip(cx - p.half_size), clip(cy + p.half_size), clip(cx + p.half_size)};
}

void apply_artifact(Image& img, const ActorAppearance& a, const FrameJitter& j, const ArtifactPlacement& p) {
  const Rect r = artifact_region(a, j, p);
  switch (p.kind) {
    case ArtifactKind::checkerboard:
      for (std::size_t y = r.y0; y < r.y1; ++y)
        for (std::size_t x = r.x0; x < r.x1; ++x) {
          const float d = static_cast<float>((x + y) % 2 == 0 ? p.strength : -p.strength);
          for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) += d;
        }
      break;
    case ArtifactKind::local_blur: {
      const Image src = img;
      const auto radius = static_cast<long>(p.strength);
      const auto hi = static_cast<long>(img.height) - 1;
      for (std::size_t y = r.y0; y < r.y1; ++y)
        for (std::size_t x = r.x0; x < r.x1; ++x)
          for (std::size_t c = 0; c < 3; ++c) {
            double acc = 0;
            for (long dy = -radius; dy <= radius; ++dy)
              for (long dx = -radius; dx <= radius; ++dx) {
                const auto yy = static_cast<std::size_t>(std::clamp(static_cast<long>(y) + dy, 0L, hi));
                const auto xx = static_cast<std::size_t>(std::clamp(static_cast<long>(x) + dx, 0L, hi));
                acc += src.at(c, yy, xx);
              }
            img.at(c, y, x) = static_cast<float>(acc / static_cast<double>((2 * radius + 1) * (2 * radius + 1)));
          }
      break;
    }
    case ArtifactKind::warp_patch: {
      const Image src = img;
      const double h = static_cast<double>(r.y1 - r.y0), w = static_cast<double>(r.x1 - r.x0);
      const double k = 2 * std::numbers::pi / p.wavelength;
      for (std::size_t y = r.y0; y < r.y1; ++y)
        for (std::size_t x = r.x0; x < r.x1; ++x) {
          const double u = (static_cast<double>(y - r.y0) + 0.5) / h, v = (static_cast<double>(x - r.x0) + 0.5) / w;
          const double taper = std::sin(std::numbers::pi * u) * std::sin(std::numbers::pi * v);
          const double dy = p.strength * taper * std::sin(k * static_cast<double>(x - r.x0));
          const double dx = p.strength * taper * std::sin(k * static_cast<double>(y - r.y0));
          for (std::size_t c = 0; c < 3; ++c)
            img.at(c, y, x) = sample(src, c, static_cast<double>(y) + dy, static_cast<double>(x) + dx);
        }
      break;
    }
    case ArtifactKind::blend_boundary: {
      const BlendEllipse e = blend_ellipse(a, j, p);
      constexpr double kSeam = 0.1;
      for (std::size_t y = r.y0; y < r.y1; ++y)
        for (std::size_t x = r.x0; x < r.x1; ++x) {
          const double dy = (static_cast<double>(y) - e.cy) / e.ry, dx = (static_cast<double>(x) - e.cx) / e.rx;
          const double n = std::sqrt(dy * dy + dx * dx);
          double seam = 0;
          if (n >= 1 - e.seam && n < 1) seam = kSeam;
          if (n >= 1 && n < 1 + e.seam) seam = -kSeam;
          const double shift = n < 1 ? p.strength : 0.0;
          img.at(0, y, x) += static_cast<float>(shift + seam);
          img.at(1, y, x) += static_cast<float>(seam);
          img.at(2, y, x) += static_cast<float>(-shift + seam);
        }
      break;
    }
  }
}

void apply_sensor_noise(Image& img, const FrameJitter& j) {
  if (j.noise_sigma <= 0) return;
  std::mt19937_64 rng(j.noise_seed);
  std::normal_distribution<double> dist(0.0, j.noise_sigma);
  for (float& v : img.pixels) v = static_cast<float>(v + dist(rng));
}

Image render_frame(const ActorAppearance& actor, const FrameJitter& jitter, const ArtifactPlacement* artifact) {
  Image img = render_face(actor, jitter);
  if (artifact != nullptr) apply_artifact(img, actor, jitter, *artifact);
  apply_sensor_noise(img, jitter);
  for (float& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

CorpusSummary synthesize_corpus(const SynthConfig& config, const fs::path& out_dir, Manifest* manifest_out) {
  config.validate();
  const fs::path meta_path = out_dir / "corpus_meta.json";
  std::string previous_hash;
  if (fs::exists(meta_path)) {
    try {
      std::ifstream in(meta_path);
      previous_hash = nlohmann::json::parse(in).value("content_hash", "");
    } catch (const nlohmann::json::exception&) {
      previous_hash.clear();
    }
  }
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  const std::size_t n_fake = fake_video_count(config.n_videos, config.fake_fraction);
  std::vector<std::size_t> order(config.n_videos);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 pick(derive_seed(config.seed, "fake-videos"));
  std::shuffle(order.begin(), order.end(), pick);
  std::vector<bool> is_fake(config.n_videos, false);
  for (std::size_t i = 0; i < n_fake; ++i) is_fake[order[i]] = true;

  Manifest manifest;
  CorpusSummary summary;
  Sha256 hash;
  std::size_t fake_seen = 0;
  const int digits = std::max<int>(4, static_cast<int>(std::to_string(config.n_videos).size()));

  for (std::size_t v = 0; v < config.n_videos; ++v) {
    const std::string video_id = config.name + "_v" + padded(v, digits);
    std::mt19937_64 rng(derive_seed(config.seed, "video/" + video_id));
    const std::size_t n_actors =
        std::uniform_int_distribution<std::size_t>(config.actors_min, config.actors_max)(rng);
    std::vector<ActorAppearance> actors;
    for (std::size_t a = 0; a < n_actors; ++a) actors.push_back(sample_actor(rng, config.image_size));
    const std::size_t manipulated = std::uniform_int_distribution<std::size_t>(0, n_actors - 1)(rng);

    std::optional<ArtifactPlacement> artifact;
    if (is_fake[v]) {
      const ArtifactKind kind = config.artifacts[fake_seen++ % config.artifacts.size()];
      artifact = sample_artifact(kind, rng, config.image_size);
      ++summary.artifact_tracks[to_string(kind)];
      ++summary.fake_videos;
    }
    ++summary.videos;

    for (std::size_t f = 0; f < config.frames_per_video; ++f) {
      for (std::size_t a = 0; a < n_actors; ++a) {
        const FrameJitter jitter = sample_jitter(rng, config.image_size);
        const bool fake_face = artifact && a == manipulated;
        const Image img = render_frame(actors[a], jitter, fake_face ? &*artifact : nullptr);
        FaceRecord rec;
        rec.video_id = video_id;
        rec.frame_index = f;
        rec.actor_id = "actor" + std::to_string(a);
        rec.label = fake_face ? 1 : 0;
        rec.image_path = "images/" + video_id + "_" + rec.actor_id + "_f" + padded(f, 3) + ".png";
        rec.resolved_path = out_dir / rec.image_path;
        const auto png = encode_png(img);
        write_file(rec.resolved_path, png);
        hash.update(rec.image_path);
        hash.update(png.data(), png.size());
        ++summary.faces;
        summary.fake_faces += static_cast<std::size_t>(rec.label);
        manifest.records.push_back(std::move(rec));
      }
    }
  }

  const std::string manifest_text = format_manifest(manifest);
  const std::string labels_text = format_labels(video_labels(manifest));
  hash.update(manifest_text);
  hash.update(labels_text);
  summary.content_hash = hash.hex();
  summary.unchanged = summary.content_hash == previous_hash;

  auto bytes = [](const std::string& s) {
    return std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size());
  };
  write_file(out_dir / "manifest.jsonl", bytes(manifest_text));
  write_file(out_dir / "labels.jsonl", bytes(labels_text));
  const nlohmann::json meta{{"config", to_json(config)},
                            {"content_hash", summary.content_hash},
                            {"summary",
                             {{"videos", summary.videos},
                              {"fake_videos", summary.fake_videos},
                              {"real_videos", summary.videos - summary.fake_videos},
                              {"faces", summary.faces},
                              {"fake_faces", summary.fake_faces},
                              {"artifact_tracks", summary.artifact_tracks}}}};
  write_file(meta_path, bytes(meta.dump(2) + "\n"));

  if (manifest_out != nullptr) *manifest_out = std::move(manifest);
  return summary;
}

}  // namespace deepshield::data
