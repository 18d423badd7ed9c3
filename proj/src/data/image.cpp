#include "deepshield/data/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "deepshield/errors.hpp"

namespace deepshield::data {

double Image::mean() const {
  if (pixels.empty()) return 0.0;
  return std::accumulate(pixels.begin(), pixels.end(), 0.0) / static_cast<double>(pixels.size());
}

std::vector<unsigned char> encode_png(const Image& image) {
  if (image.channels != 3) throw InputError("PNG output requires 3 channels, got " + std::to_string(image.channels));
  const std::size_t h = image.height, w = image.width;
  std::vector<unsigned char> interleaved(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        interleaved[(y * w + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }

  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(w);
  png.height = static_cast<png_uint_32>(h);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, interleaved.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encoding failed: ") + png.message);
  }
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, interleaved.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encoding failed: ") + png.message);
  }
  out.resize(size);
  return out;
}

Image decode_png(std::span<const unsigned char> bytes, const std::filesystem::path& origin) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  const std::string where = origin.empty() ? std::string("PNG data") : origin.string();
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw LoadError(where + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> interleaved(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, interleaved.data(), 0, nullptr)) {
    png_image_free(&png);
    throw LoadError(where + ": " + png.message);
  }
  Image image(3, png.height, png.width);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        image.at(c, y, x) = static_cast<float>(interleaved[(y * image.width + x) * 3 + c]) / 255.0f;
  return image;
}

Image read_png(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_png(bytes, path);
}

void write_png(const Image& image, const std::filesystem::path& path) { write_file(path, encode_png(image)); }

std::pair<std::size_t, std::size_t> png_size(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open image " + path.string());
  unsigned char header[24] = {};
  in.read(reinterpret_cast<char*>(header), sizeof header);
  static constexpr unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (in.gcount() != sizeof header || std::memcmp(header, kSignature, 8) != 0 ||
      std::memcmp(header + 12, "IHDR", 4) != 0) {
    throw LoadError(path.string() + " is not a PNG file");
  }
  auto be32 = [&](std::size_t at) {
    return (std::size_t{header[at]} << 24) | (std::size_t{header[at + 1]} << 16) | (std::size_t{header[at + 2]} << 8) |
           std::size_t{header[at + 3]};
  };
  return {be32(16), be32(20)};
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace deepshield::data
