#include "deepshield/data/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "deepshield/errors.hpp"
#include "deepshield/json_util.hpp"

namespace deepshield::data {

namespace {

void check_probability(double p, const std::string& path) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(path + " must lie in [0,1], got " + std::to_string(p));
}

bool coin(std::mt19937_64& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

template <typename V>
const V& pick(std::mt19937_64& rng, const std::vector<V>& options) {
  return options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
}

float sample_clamped(const Image& img, std::size_t c, double y, double x) {
  const double maxy = static_cast<double>(img.height - 1), maxx = static_cast<double>(img.width - 1);
  y = std::clamp(y, 0.0, maxy);
  x = std::clamp(x, 0.0, maxx);
  const auto y0 = static_cast<std::size_t>(std::floor(y)), x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double top = img.at(c, y0, x0) * (1 - fx) + img.at(c, y0, x1) * fx;
  const double bottom = img.at(c, y1, x0) * (1 - fx) + img.at(c, y1, x1) * fx;
  return static_cast<float>(top * (1 - fy) + bottom * fy);
}

}  // namespace

void AugmentConfig::validate(const std::string& path) const {
  check_probability(blur.p, path + ".blur.p");
  check_probability(noise.p, path + ".noise.p");
  check_probability(transpose.p, path + ".transpose.p");
  check_probability(rotation.p, path + ".rotation.p");
  check_probability(rotation.small_p, path + ".rotation.small_p");
  check_probability(resize.p, path + ".resize.p");
  if (blur.p > 0 && blur.kernels.empty()) throw ConfigError(path + ".blur.kernels must not be empty");
  for (std::size_t k : blur.kernels) {
    if (k == 0 || k % 2 == 0) throw ConfigError(path + ".blur.kernels must be odd, got " + std::to_string(k));
  }
  if (noise.sigma_min < 0 || noise.sigma_max < noise.sigma_min) {
    throw ConfigError(path + ".noise needs 0 <= sigma_min <= sigma_max");
  }
  if (rotation.p > 0 && rotation.angles.empty()) throw ConfigError(path + ".rotation.angles must not be empty");
  for (int a : rotation.angles) {
    if (a % 90 != 0) throw ConfigError(path + ".rotation.angles must be multiples of 90, got " + std::to_string(a));
  }
  if (rotation.small_max_degrees < 0) throw ConfigError(path + ".rotation.small_max_degrees must be >= 0");
  if (resize.scale_min <= 0 || resize.scale_max < resize.scale_min) {
    throw ConfigError(path + ".resize needs 0 < scale_min <= scale_max");
  }
  if (final_size == 0) throw ConfigError(path + ".final_size must be positive");
}

nlohmann::json to_json(const AugmentConfig& c) {
  return {{"blur", {{"p", c.blur.p}, {"kernels", c.blur.kernels}}},
          {"noise", {{"p", c.noise.p}, {"sigma_min", c.noise.sigma_min}, {"sigma_max", c.noise.sigma_max}}},
          {"transpose", {{"p", c.transpose.p}}},
          {"rotation",
           {{"p", c.rotation.p},
            {"angles", c.rotation.angles},
            {"small_p", c.rotation.small_p},
            {"small_max_degrees", c.rotation.small_max_degrees}}},
          {"resize", {{"p", c.resize.p}, {"scale_min", c.resize.scale_min}, {"scale_max", c.resize.scale_max}}},
          {"final_size", c.final_size}};
}

AugmentConfig augment_from_json(const nlohmann::json& j, const std::string& path) {
  json::ObjectReader r(j, path);
  AugmentConfig c;
  if (r.has("blur")) {
    json::ObjectReader b(r.child("blur"), r.field("blur"));
    b.optional("p", c.blur.p);
    b.optional("kernels", c.blur.kernels);
    b.finish();
  }
  if (r.has("noise")) {
    json::ObjectReader n(r.child("noise"), r.field("noise"));
    n.optional("p", c.noise.p);
    n.optional("sigma_min", c.noise.sigma_min);
    n.optional("sigma_max", c.noise.sigma_max);
    n.finish();
  }
  if (r.has("transpose")) {
    json::ObjectReader t(r.child("transpose"), r.field("transpose"));
    t.optional("p", c.transpose.p);
    t.finish();
  }
  if (r.has("rotation")) {
    json::ObjectReader o(r.child("rotation"), r.field("rotation"));
    o.optional("p", c.rotation.p);
    o.optional("angles", c.rotation.angles);
    o.optional("small_p", c.rotation.small_p);
    o.optional("small_max_degrees", c.rotation.small_max_degrees);
    o.finish();
  }
  if (r.has("resize")) {
    json::ObjectReader s(r.child("resize"), r.field("resize"));
    s.optional("p", c.resize.p);
    s.optional("scale_min", c.resize.scale_min);
    s.optional("scale_max", c.resize.scale_max);
    s.finish();
  }
  r.optional("final_size", c.final_size);
  r.finish();
  c.validate(path);
  return c;
}

Image transpose(const Image& image) {
  Image out(image.channels, image.width, image.height);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x) out.at(c, x, y) = image.at(c, y, x);
  return out;
}

Image rotate90(const Image& image, int quarter_turns) {
  const int turns = ((quarter_turns % 4) + 4) % 4;
  Image cur = image;
  for (int t = 0; t < turns; ++t) {
    Image next(cur.channels, cur.width, cur.height);
    const std::size_t h = cur.height;
    for (std::size_t c = 0; c < cur.channels; ++c)
      for (std::size_t i = 0; i < next.height; ++i)
        for (std::size_t j = 0; j < next.width; ++j) next.at(c, i, j) = cur.at(c, h - 1 - j, i);
    cur = std::move(next);
  }
  return cur;
}

Image rotate_bilinear(const Image& image, double degrees) {
  if (degrees == 0.0) return image;
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (static_cast<double>(image.height) - 1) / 2, cx = (static_cast<double>(image.width) - 1) / 2;
  Image out(image.channels, image.height, image.width);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x) {
      // Inverse map: rotate the output coordinate back into the source.
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double sy = cy + cs * dy - sn * dx;
      const double sx = cx + sn * dy + cs * dx;
      for (std::size_t c = 0; c < image.channels; ++c) out.at(c, y, x) = sample_clamped(image, c, sy, sx);
    }
  return out;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
  if (height == image.height && width == image.width) return image;
  if (height == 0 || width == 0) throw InputError("resize target must be non-empty");
  Image out(image.channels, height, width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
      const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
      for (std::size_t c = 0; c < image.channels; ++c) out.at(c, y, x) = sample_clamped(image, c, src_y, src_x);
    }
  return out;
}

Image gaussian_blur(const Image& image, std::size_t kernel) {
  if (kernel <= 1) return image;
  const double sigma = 0.3 * ((static_cast<double>(kernel) - 1) * 0.5 - 1) + 0.8;
  const auto r = static_cast<std::ptrdiff_t>(kernel / 2);
  std::vector<double> w(kernel);
  double total = 0;
  for (std::ptrdiff_t i = -r; i <= r; ++i) {
    w[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    total += w[static_cast<std::size_t>(i + r)];
  }
  for (double& v : w) v /= total;

  const auto h = static_cast<std::ptrdiff_t>(image.height), wd = static_cast<std::ptrdiff_t>(image.width);
  auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t hi) { return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, hi - 1)); };
  Image tmp(image.channels, image.height, image.width), out(image.channels, image.height, image.width);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::ptrdiff_t y = 0; y < h; ++y)
      for (std::ptrdiff_t x = 0; x < wd; ++x) {
        double acc = 0;
        for (std::ptrdiff_t i = -r; i <= r; ++i)
          acc += w[static_cast<std::size_t>(i + r)] * image.at(c, static_cast<std::size_t>(y), clampi(x + i, wd));
        tmp.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = static_cast<float>(acc);
      }
    for (std::ptrdiff_t y = 0; y < h; ++y)
      for (std::ptrdiff_t x = 0; x < wd; ++x) {
        double acc = 0;
        for (std::ptrdiff_t i = -r; i <= r; ++i)
          acc += w[static_cast<std::size_t>(i + r)] * tmp.at(c, clampi(y + i, h), static_cast<std::size_t>(x));
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = static_cast<float>(acc);
      }
  }
  return out;
}

void add_gaussian_noise(Image& image, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0) return;
  std::normal_distribution<double> dist(0.0, sigma);
  for (float& v : image.pixels) v = static_cast<float>(v + dist(rng));
}

void clamp_unit(Image& image) {
  for (float& v : image.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

Image augment(const Image& image, const AugmentConfig& config, std::mt19937_64& rng) {
  if (!image.square()) {
    throw InputError("augment expects a square image, got " + std::to_string(image.height) + "x" +
                     std::to_string(image.width));
  }
  Image out = image;
  // Every decision is drawn even when a transform is disabled so that one
  // transform's setting never shifts another's random stream.
  const bool do_transpose = coin(rng, config.transpose.p);
  const bool do_rotate = coin(rng, config.rotation.p);
  const int angle = config.rotation.angles.empty() ? 0 : pick(rng, config.rotation.angles);
  const bool do_small = coin(rng, config.rotation.small_p);
  const double small = uniform(rng, -config.rotation.small_max_degrees, config.rotation.small_max_degrees);
  const bool do_resize = coin(rng, config.resize.p);
  const double scale = uniform(rng, config.resize.scale_min, config.resize.scale_max);
  const bool do_blur = coin(rng, config.blur.p);
  const std::size_t kernel = config.blur.kernels.empty() ? 1 : pick(rng, config.blur.kernels);
  const bool do_noise = coin(rng, config.noise.p);
  const double sigma = uniform(rng, config.noise.sigma_min, config.noise.sigma_max);

  if (do_transpose) out = transpose(out);
  if (do_rotate) out = rotate90(out, angle / 90);
  if (do_small) out = rotate_bilinear(out, small);
  if (do_resize) {
    const std::size_t side = out.height;
    const auto scaled = static_cast<std::size_t>(std::max(1.0, std::round(static_cast<double>(side) * scale)));
    out = resize_bilinear(resize_bilinear(out, scaled, scaled), side, side);
  }
  out = resize_bilinear(out, config.final_size, config.final_size);
  if (do_blur) out = gaussian_blur(out, kernel);
  if (do_noise) add_gaussian_noise(out, sigma, rng);
  clamp_unit(out);
  return out;
}

}  // namespace deepshield::data
