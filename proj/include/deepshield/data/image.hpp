#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace deepshield::data {

/// Planar CHW image with float samples in [0,1].
struct Image {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }

  bool square() const noexcept { return height == width; }
  /// Mean over every channel and pixel.
  double mean() const;

  friend bool operator==(const Image&, const Image&) = default;
};

/// 8-bit RGB PNG. Samples are clamped to [0,1] and rounded to the nearest level.
std::vector<unsigned char> encode_png(const Image& image);
Image decode_png(std::span<const unsigned char> bytes, const std::filesystem::path& origin = {});
Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);

/// Width and height from the PNG header without decoding pixel data.
std::pair<std::size_t, std::size_t> png_size(const std::filesystem::path& path);

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);

}  // namespace deepshield::data
