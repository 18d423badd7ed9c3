#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "deepshield/data/batching.hpp"
#include "deepshield/data/synth.hpp"
#include "deepshield/errors.hpp"

using namespace deepshield;
using namespace deepshield::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("deepshield_data_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Image random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  Image img(3, h, w);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (float& v : img.pixels) v = d(rng);
  return img;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string record_line(const std::string& video, int frame, const std::string& actor, const std::string& label,
                        const std::string& image) {
  return "{\"video_id\":\"" + video + "\",\"frame_index\":" + std::to_string(frame) + ",\"actor_id\":\"" + actor +
         "\",\"label\":" + label + ",\"image_path\":\"" + image + "\"}\n";
}

std::string load_error(const fs::path& p) {
  try {
    load_manifest(p);
  } catch (const LoadError& e) {
    return e.what();
  }
  return "";
}

std::vector<unsigned char> bytes_of(const fs::path& p) { return read_file(p); }

// Pairwise statistic: P(score_fake > score_real) + ties/2.
double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = 0; j < scores.size(); ++j)
      if (labels[i] == 1 && labels[j] == 0) {
        pairs += 1;
        wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

// Energy of the 2-D DFT of the gray patch at frequencies at or above a quarter
// of the sampling rate along either axis (DC and low band excluded).
double high_frequency_energy(const Image& img, const Rect& r) {
  const std::size_t h = r.y1 - r.y0, w = r.x1 - r.x0;
  std::vector<double> gray(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      gray[y * w + x] = (img.at(0, r.y0 + y, r.x0 + x) + img.at(1, r.y0 + y, r.x0 + x) + img.at(2, r.y0 + y, r.x0 + x)) / 3;
  double energy = 0;
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      const double fu = std::min(u, h - u) / static_cast<double>(h), fv = std::min(v, w - v) / static_cast<double>(w);
      if (std::max(fu, fv) < 0.25) continue;
      std::complex<double> acc = 0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double phase = -2 * std::numbers::pi * (static_cast<double>(u * y) / h + static_cast<double>(v * x) / w);
          acc += gray[y * w + x] * std::polar(1.0, phase);
        }
      energy += std::norm(acc);
    }
  return energy / static_cast<double>(h * w);
}

}  // namespace

TEST(Png, RoundTripIsExactOnQuantizedLevels) {
  TempDir dir("png");
  std::mt19937_64 rng(1);
  Image img(3, 7, 7);
  for (float& v : img.pixels) v = static_cast<float>(std::uniform_int_distribution<int>(0, 255)(rng)) / 255.0f;
  write_png(img, dir.path / "a.png");
  EXPECT_EQ(read_png(dir.path / "a.png"), img);
  EXPECT_EQ(png_size(dir.path / "a.png"), (std::pair<std::size_t, std::size_t>{7, 7}));
  write_text(dir.path / "bad.png", "not a png");
  EXPECT_THROW(read_png(dir.path / "bad.png"), LoadError);
}

TEST(Manifest, LoadsRecordsInFileOrder) {
  TempDir dir("manifest_ok");
  write_png(Image(3, 4, 4, 0.5f), dir.path / "a.png");
  write_text(dir.path / "m.jsonl", record_line("v2", 3, "x", "1", "a.png") + "\n" + record_line("v1", 0, "y", "0", "a.png"));
  const Manifest m = load_manifest(dir.path / "m.jsonl");
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.records[0].video_id, "v2");
  EXPECT_EQ(m.records[0].frame_index, 3u);
  EXPECT_EQ(m.records[0].label, 1);
  EXPECT_EQ(m.records[1].actor_id, "y");
  EXPECT_EQ(m.records[1].resolved_path, dir.path / "a.png");
  EXPECT_EQ(format_manifest(m), record_line("v2", 3, "x", "1", "a.png") + record_line("v1", 0, "y", "0", "a.png"));
}

TEST(Manifest, RejectsBadRecords) {
  TempDir dir("manifest_bad");
  write_png(Image(3, 4, 4, 0.5f), dir.path / "a.png");
  write_png(Image(3, 4, 6, 0.5f), dir.path / "wide.png");
  const fs::path m = dir.path / "m.jsonl";
  const std::string good = record_line("v", 0, "a", "0", "a.png");

  write_text(m, good + record_line("v", 0, "a", "1", "a.png"));
  std::string err = load_error(m);
  EXPECT_NE(err.find("(v, 0, a)"), std::string::npos) << err;
  EXPECT_NE(err.find(":2"), std::string::npos) << err;

  write_text(m, good + record_line("v", 1, "a", "2", "a.png"));
  err = load_error(m);
  EXPECT_NE(err.find(":2"), std::string::npos) << err;
  EXPECT_NE(err.find("label"), std::string::npos) << err;

  write_text(m, good + "{not json\n");
  EXPECT_NE(load_error(m).find(":2"), std::string::npos);

  write_text(m, record_line("v", 0, "a", "0", "missing.png"));
  EXPECT_NE(load_error(m).find("not found"), std::string::npos);

  write_text(m, record_line("v", 0, "a", "0", "wide.png"));
  EXPECT_NE(load_error(m).find("not square"), std::string::npos);

  write_text(m, "{\"video_id\":\"v\",\"frame_index\":0,\"actor_id\":\"a\",\"label\":0,\"image_path\":\"a.png\",\"x\":1}\n");
  EXPECT_NE(load_error(m).find("unknown field"), std::string::npos);

  write_text(m, "{\"video_id\":\"v\",\"frame_index\":-1,\"actor_id\":\"a\",\"label\":0,\"image_path\":\"a.png\"}\n");
  EXPECT_NE(load_error(m).find("frame_index"), std::string::npos);
}

TEST(Manifest, VideoLabelIsAnyFakeFace) {
  Manifest m;
  m.records = {{"a", 0, "x", 0, "", {}}, {"b", 0, "x", 0, "", {}}, {"a", 0, "y", 1, "", {}}, {"b", 1, "x", 0, "", {}}};
  const auto labels = video_labels(m);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0].video_id, "a");
  EXPECT_EQ(labels[0].label, 1);
  EXPECT_EQ(labels[1].label, 0);
}

TEST(Augment, RotationIndexMapping) {
  Image img(1, 2, 2);
  // [[a,b],[c,d]] with a=1, b=2, c=3, d=4.
  img.pixels = {1, 2, 3, 4};
  EXPECT_EQ(rotate90(img, 1).pixels, (std::vector<float>{3, 1, 4, 2}));
  EXPECT_EQ(rotate90(img, 2).pixels, (std::vector<float>{4, 3, 2, 1}));
  EXPECT_EQ(transpose(img).pixels, (std::vector<float>{1, 3, 2, 4}));

  std::mt19937_64 rng(2);
  const Image r = random_image(5, 5, rng);
  EXPECT_EQ(rotate90(r, 4), r);
  EXPECT_EQ(rotate90(rotate90(r, 1), 3), r);
  EXPECT_EQ(transpose(transpose(r)), r);
  // Independent mapping: out[i][j] = in[n-1-j][i].
  const Image q = rotate90(r, 1);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(q.at(c, i, j), r.at(c, 4 - j, i));
}

TEST(Augment, IdentityWhenDisabled) {
  std::mt19937_64 rng(3);
  const Image img = random_image(16, 16, rng);
  AugmentConfig cfg;
  cfg.final_size = 16;
  std::mt19937_64 a(4);
  EXPECT_EQ(augment(img, cfg, a), img);
}

TEST(Augment, ConstantImagesSurviveFilters) {
  const Image flat(3, 12, 12, 0.4f);
  for (std::size_t k : {3u, 5u, 7u}) {
    const Image b = gaussian_blur(flat, k);
    for (float v : b.pixels) EXPECT_NEAR(v, 0.4f, 1e-6);
  }
  for (float v : resize_bilinear(flat, 20, 20).pixels) EXPECT_NEAR(v, 0.4f, 1e-6);
  for (float v : rotate_bilinear(flat, 13.0).pixels) EXPECT_NEAR(v, 0.4f, 1e-6);
}

TEST(Augment, DeterministicSquareAndInRange) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> prob(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    AugmentConfig cfg;
    cfg.blur.p = prob(gen);
    cfg.noise.p = prob(gen);
    cfg.noise.sigma_max = 0.2;
    cfg.transpose.p = prob(gen);
    cfg.rotation.p = prob(gen);
    cfg.rotation.small_p = prob(gen);
    cfg.resize.p = prob(gen);
    const std::size_t side = 8 + gen() % 24;
    cfg.final_size = 8 + gen() % 24;
    const Image img = random_image(side, side, gen);
    const std::uint64_t seed = gen();
    std::mt19937_64 a(seed), b(seed);
    const Image x = augment(img, cfg, a), y = augment(img, cfg, b);
    EXPECT_EQ(x, y);
    EXPECT_EQ(x.height, cfg.final_size);
    EXPECT_EQ(x.width, cfg.final_size);
    for (float v : x.pixels) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  std::mt19937_64 rng(6);
  EXPECT_THROW(augment(random_image(4, 6, rng), AugmentConfig{}, rng), InputError);
}

TEST(AugmentConfig, ValidationAndJson) {
  AugmentConfig c;
  c.blur.p = 0.3;
  c.rotation.angles = {90, 270};
  EXPECT_EQ(augment_from_json(to_json(c), "augment"), c);
  auto j = to_json(c);
  j["noise"]["p"] = 1.5;
  EXPECT_THROW(augment_from_json(j, "augment"), ConfigError);
  j = to_json(c);
  j["blur"]["kernels"] = {4};
  EXPECT_THROW(augment_from_json(j, "augment"), ConfigError);
  j = to_json(c);
  j["flip"] = {{"p", 0.5}};
  EXPECT_THROW(augment_from_json(j, "augment"), ConfigError);
}

TEST(Synth, FakeCountRoundingRule) {
  EXPECT_EQ(fake_video_count(100, 0.5), 50u);
  EXPECT_EQ(fake_video_count(3, 0.5), 2u);
  EXPECT_EQ(fake_video_count(7, 0.0), 0u);
  EXPECT_EQ(fake_video_count(7, 1.0), 7u);
  TempDir dir("synth_counts");
  for (std::size_t n : {2u, 3u, 9u, 20u}) {
    for (double f : {0.0, 0.3, 0.5, 0.75, 1.0}) {
      SynthConfig c;
      c.n_videos = n;
      c.frames_per_video = 1;
      c.image_size = 16;
      c.fake_fraction = f;
      c.seed = n;
      Manifest m;
      const auto s = synthesize_corpus(c, dir.path, &m);
      EXPECT_EQ(s.fake_videos, fake_video_count(n, f));
      std::size_t fakes = 0;
      for (const auto& v : video_labels(m)) fakes += static_cast<std::size_t>(v.label);
      EXPECT_EQ(fakes, fake_video_count(n, f)) << n << " " << f;
    }
  }
}

TEST(Synth, OneManipulatedActorPerFakeVideo) {
  TempDir dir("synth_actors");
  SynthConfig c;
  c.n_videos = 12;
  c.frames_per_video = 3;
  c.actors_min = 2;
  c.actors_max = 3;
  c.image_size = 32;
  Manifest m;
  const auto s = synthesize_corpus(c, dir.path, &m);
  EXPECT_EQ(s.fake_videos, 6u);
  std::map<std::string, std::set<std::string>> fake_actors, actors;
  for (const auto& r : m.records) {
    actors[r.video_id].insert(r.actor_id);
    if (r.label == 1) fake_actors[r.video_id].insert(r.actor_id);
  }
  EXPECT_EQ(fake_actors.size(), 6u);
  for (const auto& [video, set] : fake_actors) EXPECT_EQ(set.size(), 1u) << video;
  for (const auto& [video, set] : actors) {
    EXPECT_GE(set.size(), 2u);
    EXPECT_LE(set.size(), 3u);
  }
  std::size_t tracks = 0;
  for (const auto& [kind, n] : s.artifact_tracks) {
    EXPECT_GE(n, 1u) << kind;
    tracks += n;
  }
  EXPECT_EQ(tracks, 6u);
  EXPECT_EQ(s.artifact_tracks.size(), 4u);
  const Manifest loaded = load_manifest(dir.path / "manifest.jsonl");
  EXPECT_EQ(loaded.records.size(), m.records.size());
}

TEST(Synth, ByteIdenticalAcrossRuns) {
  TempDir a("synth_a"), b("synth_b");
  SynthConfig c;
  c.n_videos = 6;
  c.frames_per_video = 2;
  c.image_size = 32;
  c.seed = 77;
  const auto sa = synthesize_corpus(c, a.path);
  const auto sb = synthesize_corpus(c, b.path);
  EXPECT_EQ(sa.content_hash, sb.content_hash);
  EXPECT_FALSE(sa.unchanged);
  for (const auto& entry : fs::recursive_directory_iterator(a.path)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.path);
    EXPECT_EQ(bytes_of(entry.path()), bytes_of(b.path / rel)) << rel;
  }
  EXPECT_TRUE(synthesize_corpus(c, a.path).unchanged);
  c.seed = 78;
  const auto sc = synthesize_corpus(c, a.path);
  EXPECT_FALSE(sc.unchanged);
  EXPECT_NE(sc.content_hash, sa.content_hash);
}

TEST(Synth, CheckerboardRaisesHighFrequencyEnergy) {
  std::mt19937_64 rng(2024);
  double fake_total = 0, real_total = 0;
  const int pairs = 120;
  for (int i = 0; i < pairs; ++i) {
    const ActorAppearance actor = sample_actor(rng, 64);
    const ArtifactPlacement art = sample_artifact(ArtifactKind::checkerboard, rng, 64);
    const FrameJitter jitter = sample_jitter(rng, 64);
    const Image real = render_frame(actor, jitter, nullptr);
    const Image fake = render_frame(actor, jitter, &art);
    const Rect r = artifact_region(actor, jitter, art);
    ASSERT_GT(r.y1 - r.y0, 8u);
    const double ef = high_frequency_energy(fake, r), er = high_frequency_energy(real, r);
    EXPECT_GT(ef, er);
    fake_total += ef;
    real_total += er;
  }
  EXPECT_GT(fake_total / pairs, real_total / pairs);
}

TEST(Synth, ArtifactsTouchOnlyTheirRegion) {
  std::mt19937_64 rng(31);
  for (ArtifactKind kind : all_artifacts()) {
    const ActorAppearance actor = sample_actor(rng, 64);
    const ArtifactPlacement art = sample_artifact(kind, rng, 64);
    const FrameJitter jitter = sample_jitter(rng, 64);
    const Image real = render_frame(actor, jitter, nullptr);
    const Image fake = render_frame(actor, jitter, &art);
    const Rect r = artifact_region(actor, jitter, art);
    bool changed = false;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 64; ++x) {
          const bool inside = y >= r.y0 && y < r.y1 && x >= r.x0 && x < r.x1;
          if (!inside) {
            ASSERT_EQ(real.at(c, y, x), fake.at(c, y, x)) << to_string(kind);
          } else {
            changed = changed || real.at(c, y, x) != fake.at(c, y, x);
          }
        }
    EXPECT_TRUE(changed) << to_string(kind);
  }
}

TEST(Synth, PixelMeanBaselineIsWeak) {
  TempDir dir("synth_baseline");
  SynthConfig c;
  c.n_videos = 80;
  c.frames_per_video = 3;
  c.seed = 5;
  Manifest m;
  synthesize_corpus(c, dir.path, &m);
  std::map<std::string, std::pair<double, int>> sums;
  const ImageCache cache(m);
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    auto& s = sums[m.records[i].video_id];
    s.first += cache.get(i).mean();
    s.second += 1;
  }
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& v : video_labels(m)) {
    scores.push_back(sums[v.video_id].first / sums[v.video_id].second);
    labels.push_back(v.label);
  }
  const double auc = pairwise_auc(scores, labels);
  EXPECT_LT(std::max(auc, 1 - auc), 0.7) << auc;
}

TEST(SynthConfig, Validation) {
  SynthConfig c;
  c.fake_fraction = 1.5;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("fake_fraction"), std::string::npos);
  }
  EXPECT_EQ(synth_from_json(to_json(SynthConfig{}), "synth"), SynthConfig{});
  auto j = to_json(SynthConfig{});
  j["artifacts"] = {"checkerboard", "smudge"};
  EXPECT_THROW(synth_from_json(j, "synth"), ConfigError);
}

TEST(Batching, SizesOrderAndAlignment) {
  const auto plan = batch_plan(10, 4, 9);
  ASSERT_EQ(plan.size(), 3u);
  EXPECT_EQ(plan[0].size(), 4u);
  EXPECT_EQ(plan[1].size(), 4u);
  EXPECT_EQ(plan[2].size(), 2u);
  EXPECT_EQ(plan, batch_plan(10, 4, 9));
  std::set<std::vector<std::vector<std::size_t>>> distinct;
  for (std::uint64_t seed = 0; seed < 5; ++seed) distinct.insert(batch_plan(10, 4, seed));
  EXPECT_EQ(distinct.size(), 5u);
  std::vector<std::size_t> all;
  for (const auto& g : plan) all.insert(all.end(), g.begin(), g.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
  EXPECT_THROW(batch_plan(0, 4, 1), InputError);
  EXPECT_THROW(batch_plan(3, 0, 1), ConfigError);
  EXPECT_EQ(batch_plan(5, 2, 0, false), (std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}, {4}}));
}

TEST(Batching, LabelsAlignedAndImagesSquare) {
  TempDir dir("batching");
  SynthConfig c;
  c.n_videos = 6;
  c.frames_per_video = 2;
  c.image_size = 24;
  Manifest m;
  synthesize_corpus(c, dir.path, &m);
  AugmentConfig aug;
  aug.rotation.p = 0.5;
  aug.noise.p = 0.5;
  aug.final_size = 20;
  const auto batches = make_batches(m, 4, 3, &aug);
  const auto again = make_batches(m, 4, 3, &aug);
  std::size_t seen = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& batch = batches[b];
    EXPECT_EQ(batch.images.shape(), (Shape{batch.records.size(), 3, 20, 20}));
    EXPECT_EQ(batch.images, again[b].images);
    for (std::size_t i = 0; i < batch.records.size(); ++i)
      EXPECT_EQ(batch.labels[i], static_cast<float>(m.records[batch.records[i]].label));
    seen += batch.records.size();
    // Standardized values stay within the image of [0,1].
    for (float v : batch.images.data()) {
      EXPECT_GE(v, -2.0f - 1e-5f);
      EXPECT_LE(v, 2.0f + 1e-5f);
    }
  }
  EXPECT_EQ(seen, m.records.size());
  const auto plain = make_batches(m, 5, 3, nullptr, 32);
  EXPECT_EQ(plain[0].images.shape(), (Shape{5, 3, 32, 32}));
  Manifest empty;
  EXPECT_THROW(make_batches(empty, 4, 1, nullptr), InputError);
}
