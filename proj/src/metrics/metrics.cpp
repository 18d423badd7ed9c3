#include "deepshield/metrics/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "deepshield/errors.hpp"
#include "deepshield/json_util.hpp"

namespace deepshield::metrics {

namespace {

void check_binary(const std::vector<int>& values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] != 0 && values[i] != 1) {
      throw InputError(std::string(what) + "[" + std::to_string(i) + "] = " + std::to_string(values[i]) +
                       " is not 0 or 1");
    }
  }
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string shortest(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

Confusion confusion(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size()) {
    throw InputError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw InputError("confusion: no items");
  check_binary(preds, "preds");
  check_binary(labels, "labels");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1) {
      (labels[i] == 1 ? c.tp : c.fp)++;
    } else {
      (labels[i] == 1 ? c.fn : c.tn)++;
    }
  }
  return c;
}

F1Score f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn), which avoids two roundings.
  const std::size_t den = 2 * tp + fp + fn;
  if (tp == 0) return {0.0, true};
  return {static_cast<double>(2 * tp) / static_cast<double>(den), false};
}

std::vector<RocPoint> roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw InputError("roc_curve: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                     " labels");
  }
  check_binary(labels, "labels");
  for (double s : scores) {
    if (!std::isfinite(s)) throw InputError("roc_curve: non-finite score");
  }
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw MetricError("ROC/AUC undefined: labels contain a single class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> curve{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] == 1 ? tp : fp)++;
    curve.push_back({ratio(fp, negatives), ratio(tp, positives), t});
  }
  return curve;
}

double auc(const std::vector<RocPoint>& curve) {
  if (curve.size() < 2) throw MetricError("auc: curve needs at least two points");
  double area = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double dx = curve[i].fpr - curve[i - 1].fpr;
    if (dx < 0 || curve[i].tpr < curve[i - 1].tpr) throw MetricError("auc: curve is not monotone");
    area += dx * (curve[i].tpr + curve[i - 1].tpr) / 2;
  }
  return area;
}

MetricsReport make_report(const Confusion& c) {
  MetricsReport r;
  r.tp = c.tp;
  r.fp = c.fp;
  r.tn = c.tn;
  r.fn = c.fn;
  r.n_items = c.total();
  r.accuracy = ratio(c.tp + c.tn, r.n_items);
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  const auto score = f1(c.tp, c.fp, c.fn);
  r.f1 = score.value;
  r.f1_degenerate = score.degenerate;
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["n_items"] = r.n_items;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["tn"] = r.tn;
  j["fn"] = r.fn;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["f1_degenerate"] = r.f1_degenerate;
  j["auc"] = r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr);
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j, const std::string& path) {
  json::ObjectReader reader(j, path);
  MetricsReport r;
  reader.required("n_items", r.n_items);
  reader.required("tp", r.tp);
  reader.required("fp", r.fp);
  reader.required("tn", r.tn);
  reader.required("fn", r.fn);
  reader.required("accuracy", r.accuracy);
  reader.required("precision", r.precision);
  reader.required("recall", r.recall);
  reader.required("f1", r.f1);
  reader.required("f1_degenerate", r.f1_degenerate);
  const auto& a = reader.child("auc");
  if (!a.is_null()) {
    if (!a.is_number()) throw ConfigError(reader.field("auc") + " must be a number or null");
    r.auc = a.get<double>();
  }
  reader.finish();
  return r;
}

Evaluation evaluate_run(const std::vector<Prediction>& predictions,
                        const std::vector<std::pair<std::string, int>>& labels) {
  if (predictions.empty()) throw InputError("evaluate_run: no predictions");
  std::unordered_map<std::string, int> truth;
  for (const auto& [id, label] : labels) {
    if (label != 0 && label != 1) throw InputError("label of " + id + " is not 0 or 1");
    truth[id] = label;
  }
  std::vector<int> preds, y;
  std::vector<double> scores;
  bool all_scored = true;
  for (const auto& p : predictions) {
    const auto it = truth.find(p.id);
    if (it == truth.end()) throw InputError("no label for predicted id " + p.id);
    preds.push_back(p.fake ? 1 : 0);
    y.push_back(it->second);
    if (p.score) {
      scores.push_back(*p.score);
    } else {
      all_scored = false;
    }
  }
  Evaluation ev;
  ev.report = make_report(confusion(preds, y));
  const bool both_classes = ev.report.tp + ev.report.fn > 0 && ev.report.fp + ev.report.tn > 0;
  if (all_scored && both_classes) {
    ev.roc = roc_curve(scores, y);
    ev.report.auc = auc(ev.roc);
  }
  return ev;
}

std::string format_roc_csv(const std::vector<RocPoint>& curve) {
  std::string out = "fpr,tpr,threshold\n";
  for (const auto& p : curve) out += shortest(p.fpr) + "," + shortest(p.tpr) + "," + shortest(p.threshold) + "\n";
  return out;
}

void emit(const Evaluation& evaluation, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + p.string());
  };
  write(out_dir / "report.json", to_json(evaluation.report).dump(2) + "\n");
  write(out_dir / "roc.csv", format_roc_csv(evaluation.roc));
}

}  // namespace deepshield::metrics
