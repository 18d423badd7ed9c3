#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepshield/data/image.hpp"

namespace deepshield::data {

struct BlurAugment {
  double p = 0.0;
  std::vector<std::size_t> kernels{3, 5};

  friend bool operator==(const BlurAugment&, const BlurAugment&) = default;
};

struct NoiseAugment {
  double p = 0.0;
  double sigma_min = 0.01;
  double sigma_max = 0.05;

  friend bool operator==(const NoiseAugment&, const NoiseAugment&) = default;
};

struct TransposeAugment {
  double p = 0.0;

  friend bool operator==(const TransposeAugment&, const TransposeAugment&) = default;
};

/// Clockwise right-angle rotation picked from `angles`, then an independent
/// small bilinear rotation within +-small_max_degrees with probability small_p.
struct RotationAugment {
  double p = 0.0;
  std::vector<int> angles{90, 180, 270};
  double small_p = 0.0;
  double small_max_degrees = 15.0;

  friend bool operator==(const RotationAugment&, const RotationAugment&) = default;
};

/// Scales by s in [scale_min, scale_max] and resizes back to the input side.
struct ResizeAugment {
  double p = 0.0;
  double scale_min = 0.8;
  double scale_max = 1.2;

  friend bool operator==(const ResizeAugment&, const ResizeAugment&) = default;
};

/// Transforms run in a fixed order: transpose, rotation, small rotation,
/// isotropic resize, resize to final_size, blur, noise, clamp to [0,1].
struct AugmentConfig {
  BlurAugment blur;
  NoiseAugment noise;
  TransposeAugment transpose;
  RotationAugment rotation;
  ResizeAugment resize;
  std::size_t final_size = 64;

  void validate(const std::string& path = "augment") const;
  friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
};

nlohmann::json to_json(const AugmentConfig& c);
AugmentConfig augment_from_json(const nlohmann::json& j, const std::string& path);

Image augment(const Image& image, const AugmentConfig& config, std::mt19937_64& rng);

// Individual transforms, exposed for testing and reuse.

Image transpose(const Image& image);
/// Clockwise by quarter_turns * 90 degrees: out[i][j] = in[n-1-j][i] per turn.
Image rotate90(const Image& image, int quarter_turns);
/// Bilinear rotation about the center, border pixels replicated.
Image rotate_bilinear(const Image& image, double degrees);
/// Bilinear resampling to side x side (pixel-center aligned).
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);
/// Separable Gaussian with the usual sigma for an odd kernel size.
Image gaussian_blur(const Image& image, std::size_t kernel);
void add_gaussian_noise(Image& image, double sigma, std::mt19937_64& rng);
void clamp_unit(Image& image);

}  // namespace deepshield::data
