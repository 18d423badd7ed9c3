#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepshield/data/augment.hpp"
#include "deepshield/data/manifest.hpp"
#include "deepshield/diffcore/tensor.hpp"

namespace deepshield::data {

/// Per-channel standardization applied after augmentation: (x - mean) / std.
struct Normalization {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> std{0.25, 0.25, 0.25};

  void validate(const std::string& path = "normalization") const;
  friend bool operator==(const Normalization&, const Normalization&) = default;
};

nlohmann::json to_json(const Normalization& n);
Normalization normalization_from_json(const nlohmann::json& j, const std::string& path);

/// Decoded 8-bit pixels of every record, loaded on first use.
class ImageCache {
 public:
  explicit ImageCache(const Manifest& manifest);

  /// Float image in [0,1]. Thread-safe.
  Image get(std::size_t record) const;
  /// Decodes everything up front.
  void preload() const;

 private:
  const Manifest* manifest_;
  mutable std::vector<std::optional<std::vector<unsigned char>>> pixels_;
  mutable std::vector<std::array<std::size_t, 2>> sizes_;
  mutable std::mutex mutex_;
};

struct Batch {
  Tensor<float> images;  // [B,3,S,S], standardized
  Tensor<float> labels;  // [B]
  std::vector<std::size_t> records;
};

/// Record order for one pass: a seeded Fisher-Yates shuffle (or identity when
/// shuffle is false) cut into groups of batch_size; the last may be short.
std::vector<std::vector<std::size_t>> batch_plan(std::size_t n_records, std::size_t batch_size,
                                                 std::uint64_t shuffle_seed, bool shuffle = true);

/// Seed of a record's augmentation stream, a function of (shuffle_seed, key).
std::uint64_t augment_seed(std::uint64_t shuffle_seed, const FaceRecord& record);

/// One face as delivered to a model: augmented (if configured), square at
/// final_size, clamped to [0,1], not yet standardized.
Image prepare_face(const Manifest& manifest, const ImageCache& cache, std::size_t record, std::size_t final_size,
                   std::uint64_t shuffle_seed, const AugmentConfig* augment);

Batch assemble_batch(const Manifest& manifest, const ImageCache& cache, const std::vector<std::size_t>& records,
                     std::size_t final_size, std::uint64_t shuffle_seed, const AugmentConfig* augment,
                     const Normalization& norm);

/// Every batch of a pass in delivery order. final_size comes from the augment
/// config when present.
std::vector<Batch> make_batches(const Manifest& manifest, std::size_t batch_size, std::uint64_t shuffle_seed,
                                const AugmentConfig* augment, std::size_t final_size = 64,
                                const Normalization& norm = {});

}  // namespace deepshield::data
