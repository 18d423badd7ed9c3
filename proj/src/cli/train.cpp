#include "deepshield/cli/train.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "deepshield/data/seeding.hpp"
#include "deepshield/diffcore/optim.hpp"
#include "deepshield/errors.hpp"
#include "deepshield/transformer/checkpoint.hpp"

namespace deepshield::cli {

namespace {

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  data::write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03zu.ckpt", epoch);
  return buf;
}

data::Manifest load_split(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("paths.") + what + " is required for training");
  return data::load_manifest(path);
}

}  // namespace

std::string format_train_log(const std::vector<EpochRecord>& log) {
  std::string out = "epoch,train_loss,val_loss,val_auc,val_f1\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + number(e.train_loss) + "," + number(e.val_loss) + "," + number(e.val_auc) +
           "," + number(e.val_f1) + "\n";
  }
  return out;
}

std::string format_train_timing(const std::vector<EpochRecord>& log) {
  std::string out = "epoch,wall_seconds\n";
  for (const auto& e : log) out += std::to_string(e.epoch) + "," + number(e.wall_seconds) + "\n";
  return out;
}

std::vector<double> score_records(const transformer::Detector<float>& model, const data::Manifest& manifest,
                                  const data::ImageCache& cache, const data::Normalization& norm,
                                  std::size_t batch_size) {
  std::vector<std::size_t> all(manifest.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const videoinfer::ScoringInputs inputs{&manifest, &cache, model.config().image_size, norm};
  const auto faces = videoinfer::score_faces(videoinfer::detector_scorer(model), inputs, all, batch_size);
  std::vector<double> probs;
  probs.reserve(faces.size());
  for (const auto& f : faces) probs.push_back(f.prob);
  return probs;
}

double mean_bce(const std::vector<double>& probs, const data::Manifest& manifest) {
  constexpr double kClamp = 1e-7;
  double total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kClamp, 1.0 - kClamp);
    total -= manifest.records[i].label == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.size());
}

metrics::Evaluation evaluate_scores(const data::Manifest& manifest, const std::vector<double>& probs,
                                    const videoinfer::InferenceConfig& inference) {
  const auto result = videoinfer::verdicts_from_scores(manifest, probs, inference);
  std::vector<metrics::Prediction> preds;
  for (const auto& v : result.verdicts) preds.push_back({v.video_id, v.fake, v.video_score()});
  std::vector<std::pair<std::string, int>> labels;
  for (const auto& l : data::video_labels(manifest)) labels.emplace_back(l.video_id, l.label);
  return metrics::evaluate_run(preds, labels);
}

TrainResult train(const RunConfig& config, std::ostream* progress) {
  config.validate();
  if (config.paths.checkpoint_dir.empty()) throw ConfigError("paths.checkpoint_dir is required for training");
  const std::filesystem::path ckpt_dir = config.paths.checkpoint_dir;
  const std::filesystem::path out_dir = config.paths.out_dir.empty() ? ckpt_dir : std::filesystem::path(config.paths.out_dir);
  const auto train_set = load_split(config.paths.train_manifest, "train_manifest");
  const auto val_set = load_split(config.paths.val_manifest, "val_manifest");
  for (const auto& dir : {ckpt_dir, out_dir}) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }
  write_resolved_config(config, out_dir);

  const auto& tc = config.training;
  TrainResult result;
  result.model = transformer::make_detector<float>(config.model, tc.seed);
  auto& model = *result.model;
  Sgd<float> sgd({tc.learning_rate, tc.momentum, tc.weight_decay});
  const data::ImageCache train_cache(train_set), val_cache(val_set);
  const std::size_t n = train_set.records.size();
  double best_auc = -std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t epoch_seed = data::derive_seed(tc.seed, "epoch" + std::to_string(epoch));
    std::mt19937_64 dropout_rng(data::derive_seed(epoch_seed, "dropout"));
    double loss_sum = 0;
    std::size_t batch_index = 0;
    for (const auto& group : data::batch_plan(n, tc.batch_size, epoch_seed)) {
      const auto batch = data::assemble_batch(train_set, train_cache, group, config.model.image_size, epoch_seed,
                                              &config.augment, config.normalization);
      const auto out = model.forward(Var<float>(batch.images), ForwardMode::train(&dropout_rng));
      const auto loss = ops::bce_loss(out.probs, batch.labels);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      backward(loss);
      sgd.step(model.params());
      model.params().zero_grad();
      loss_sum += value * static_cast<double>(group.size());
      ++batch_index;
    }

    const auto probs = score_records(model, val_set, val_cache, config.normalization, config.inference.batch_size);
    const auto eval = evaluate_scores(val_set, probs, config.inference);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_loss = mean_bce(probs, val_set);
    rec.val_auc = eval.report.auc.value_or(std::numeric_limits<double>::quiet_NaN());
    rec.val_f1 = eval.report.f1;
    if (!std::isfinite(rec.val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));

    transformer::save_model(model, ckpt_dir / epoch_name(epoch));
    const double auc_key = std::isnan(rec.val_auc) ? -std::numeric_limits<double>::infinity() : rec.val_auc;
    // Higher val AUC wins; equal AUC falls back to lower val loss.
    if (result.best_epoch == 0 || auc_key > best_auc || (auc_key == best_auc && rec.val_loss < best_loss)) {
      best_auc = auc_key;
      best_loss = rec.val_loss;
      result.best_epoch = epoch;
      transformer::save_model(model, ckpt_dir / "best.ckpt");
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(rec);
    write_text(out_dir / "train_log.csv", format_train_log(result.log));
    write_text(out_dir / "train_timing.csv", format_train_timing(result.log));
    if (progress != nullptr) {
      char line[200];
      std::snprintf(line, sizeof line, "epoch %zu  train_loss %.4f  val_loss %.4f  val_auc %.4f  val_f1 %.4f  (%.1fs)\n",
                    epoch, rec.train_loss, rec.val_loss, rec.val_auc, rec.val_f1, rec.wall_seconds);
      *progress << line << std::flush;
    }
  }
  return result;
}

}  // namespace deepshield::cli
