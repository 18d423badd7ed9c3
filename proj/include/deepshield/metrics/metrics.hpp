#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace deepshield::metrics {

// Fake is the positive class throughout.

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

Confusion confusion(const std::vector<int>& preds, const std::vector<int>& labels);

struct F1Score {
  double value = 0;
  bool degenerate = false;  // precision + recall == 0, value forced to 0
};

F1Score f1(std::size_t tp, std::size_t fp, std::size_t fn);

struct RocPoint {
  double fpr = 0, tpr = 0;
  double threshold = 0;  // +inf for the sentinel that starts the curve

  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

/// Sweeps the sentinel then every distinct score in descending order,
/// predicting fake when score >= threshold. Needs both classes.
std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

/// Trapezoidal area under a curve produced by roc_curve.
double auc(const std::vector<RocPoint>& curve);

struct MetricsReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  bool f1_degenerate = false;
  std::optional<double> auc;  // absent without scores or with a single class
  std::size_t n_items = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j, const std::string& path);

MetricsReport make_report(const Confusion& c);

/// One evaluated unit (a video, or a face when reporting per face).
struct Prediction {
  std::string id;
  bool fake = false;
  std::optional<double> score;
};

struct Evaluation {
  MetricsReport report;
  std::vector<RocPoint> roc;  // empty when the report has no AUC
};

/// Matches predictions to labels by id. Every prediction needs a label;
/// labels without a prediction are ignored. AUC and ROC are computed when
/// every prediction carries a score and both classes are present.
Evaluation evaluate_run(const std::vector<Prediction>& predictions, const std::vector<std::pair<std::string, int>>& labels);

std::string format_roc_csv(const std::vector<RocPoint>& curve);
/// Writes report.json and roc.csv into out_dir.
void emit(const Evaluation& evaluation, const std::filesystem::path& out_dir);

}  // namespace deepshield::metrics
