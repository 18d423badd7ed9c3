#include "deepshield/data/batching.hpp"

#include <cmath>
#include <numeric>

#include "deepshield/data/seeding.hpp"
#include "deepshield/errors.hpp"
#include "deepshield/json_util.hpp"

namespace deepshield::data {

void Normalization::validate(const std::string& path) const {
  for (std::size_t c = 0; c < 3; ++c) {
    if (!std::isfinite(mean[c])) throw ConfigError(path + ".mean must be finite");
    if (!(std[c] > 0) || !std::isfinite(std[c])) throw ConfigError(path + ".std must be positive");
  }
}

nlohmann::json to_json(const Normalization& n) { return {{"mean", n.mean}, {"std", n.std}}; }

Normalization normalization_from_json(const nlohmann::json& j, const std::string& path) {
  json::ObjectReader r(j, path);
  Normalization n;
  r.optional("mean", n.mean);
  r.optional("std", n.std);
  r.finish();
  n.validate(path);
  return n;
}

ImageCache::ImageCache(const Manifest& manifest)
    : manifest_(&manifest), pixels_(manifest.records.size()), sizes_(manifest.records.size()) {}

Image ImageCache::get(std::size_t record) const {
  {
    std::lock_guard lock(mutex_);
    if (pixels_.at(record)) {
      const auto& px = *pixels_[record];
      Image img(3, sizes_[record][0], sizes_[record][1]);
      for (std::size_t i = 0; i < px.size(); ++i) img.pixels[i] = static_cast<float>(px[i]) / 255.0f;
      return img;
    }
  }
  const auto& r = manifest_->records[record];
  Image img = read_png(r.resolved_path);
  if (!img.square()) {
    throw LoadError("image " + r.image_path + " for " + r.key() + " is not square (" + std::to_string(img.height) +
                    "x" + std::to_string(img.width) + ")");
  }
  std::vector<unsigned char> px(img.pixels.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<unsigned char>(std::lround(img.pixels[i] * 255.0f));
  std::lock_guard lock(mutex_);
  sizes_[record] = {img.height, img.width};
  pixels_[record] = std::move(px);
  return img;
}

void ImageCache::preload() const {
  for (std::size_t i = 0; i < pixels_.size(); ++i) get(i);
}

std::vector<std::vector<std::size_t>> batch_plan(std::size_t n_records, std::size_t batch_size,
                                                 std::uint64_t shuffle_seed, bool shuffle) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (n_records == 0) throw InputError("cannot batch an empty manifest");
  std::vector<std::size_t> order(n_records);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    std::mt19937_64 rng(derive_seed(shuffle_seed, "shuffle"));
    for (std::size_t i = n_records - 1; i > 0; --i) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i)(rng);
      std::swap(order[i], order[j]);
    }
  }
  std::vector<std::vector<std::size_t>> plan;
  for (std::size_t start = 0; start < n_records; start += batch_size) {
    const std::size_t end = std::min(n_records, start + batch_size);
    plan.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

std::uint64_t augment_seed(std::uint64_t shuffle_seed, const FaceRecord& record) {
  return derive_seed(shuffle_seed, "augment" + record.key());
}

Image prepare_face(const Manifest& manifest, const ImageCache& cache, std::size_t record, std::size_t final_size,
                   std::uint64_t shuffle_seed, const AugmentConfig* augment) {
  Image img = cache.get(record);
  if (augment != nullptr) {
    std::mt19937_64 rng(augment_seed(shuffle_seed, manifest.records[record]));
    img = data::augment(img, *augment, rng);
  } else {
    img = resize_bilinear(img, final_size, final_size);
    clamp_unit(img);
  }
  return img;
}

Batch assemble_batch(const Manifest& manifest, const ImageCache& cache, const std::vector<std::size_t>& records,
                     std::size_t final_size, std::uint64_t shuffle_seed, const AugmentConfig* augment,
                     const Normalization& norm) {
  if (augment != nullptr) final_size = augment->final_size;
  const std::size_t b = records.size(), plane = final_size * final_size;
  Batch batch;
  batch.images = Tensor<float>(Shape{b, 3, final_size, final_size});
  batch.labels = Tensor<float>(Shape{b});
  batch.records = records;
  float* dst = batch.images.raw();
  for (std::size_t i = 0; i < b; ++i) {
    const Image img = prepare_face(manifest, cache, records[i], final_size, shuffle_seed, augment);
    if (img.height != final_size || img.width != final_size || img.channels != 3) {
      throw ContractError("face " + manifest.records[records[i]].key() + " is " + std::to_string(img.height) + "x" +
                          std::to_string(img.width) + ", expected square " + std::to_string(final_size));
    }
    for (std::size_t c = 0; c < 3; ++c) {
      const auto mean = static_cast<float>(norm.mean[c]), inv = static_cast<float>(1.0 / norm.std[c]);
      const float* src = img.pixels.data() + c * plane;
      float* out = dst + (i * 3 + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) out[k] = (src[k] - mean) * inv;
    }
    batch.labels[i] = static_cast<float>(manifest.records[records[i]].label);
  }
  return batch;
}

std::vector<Batch> make_batches(const Manifest& manifest, std::size_t batch_size, std::uint64_t shuffle_seed,
                                const AugmentConfig* augment, std::size_t final_size, const Normalization& norm) {
  const ImageCache cache(manifest);
  std::vector<Batch> out;
  for (const auto& group : batch_plan(manifest.records.size(), batch_size, shuffle_seed)) {
    out.push_back(assemble_batch(manifest, cache, group, final_size, shuffle_seed, augment, norm));
  }
  return out;
}

}  // namespace deepshield::data
