#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include "deepshield/cli/run_config.hpp"
#include "deepshield/metrics/metrics.hpp"
#include "deepshield/transformer/models.hpp"

namespace deepshield::cli {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_auc = 0;  // NaN when the validation split has a single class
  double val_f1 = 0;
  double wall_seconds = 0;
};

/// train_log.csv: epoch,train_loss,val_loss,val_auc,val_f1. Timing lives in
/// a separate file so the log itself is reproducible byte for byte.
std::string format_train_log(const std::vector<EpochRecord>& log);
std::string format_train_timing(const std::vector<EpochRecord>& log);

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  std::unique_ptr<transformer::Detector<float>> model;  // state after the last epoch
};

/// Eval-mode probabilities for every record of `manifest`, in record order.
std::vector<double> score_records(const transformer::Detector<float>& model, const data::Manifest& manifest,
                                  const data::ImageCache& cache, const data::Normalization& norm,
                                  std::size_t batch_size);

/// Mean face-level BCE with the training clamp.
double mean_bce(const std::vector<double>& probs, const data::Manifest& manifest);

/// Video-level evaluation of per-record scores against the manifest's own
/// labels, using the run's inference settings.
metrics::Evaluation evaluate_scores(const data::Manifest& manifest, const std::vector<double>& probs,
                                    const videoinfer::InferenceConfig& inference);

/// BCE + SGD over paths.train_manifest, validated on paths.val_manifest after
/// every epoch. Writes epoch_NNN.ckpt and best.ckpt (highest video-level val
/// AUC; ties go to the lower val loss, then the earlier epoch) under
/// paths.checkpoint_dir, and train_log.csv, train_timing.csv and
/// resolved_config.json under paths.out_dir (or the checkpoint dir when
/// out_dir is empty). Progress lines go to `progress`.
TrainResult train(const RunConfig& config, std::ostream* progress = nullptr);

}  // namespace deepshield::cli
