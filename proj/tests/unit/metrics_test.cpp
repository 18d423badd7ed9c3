#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "deepshield/errors.hpp"
#include "deepshield/metrics/metrics.hpp"

using namespace deepshield;
using namespace deepshield::metrics;
namespace fs = std::filesystem;

namespace {

// P(score_fake > score_real) + P(tie)/2 over every positive/negative pair.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      if (s[i] > s[j]) wins += 1;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

struct ScoreSet {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Both classes always present; with `ties`, scores come from a coarse grid.
ScoreSet random_set(std::mt19937_64& rng, bool ties) {
  const int n = std::uniform_int_distribution<int>(2, 50)(rng);
  ScoreSet out;
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> grid(0, 8);
  for (int i = 0; i < n; ++i) {
    out.scores.push_back(ties ? grid(rng) / 8.0 : u(rng));
    out.labels.push_back(i == 0 ? 0 : i == 1 ? 1 : static_cast<int>(rng() % 2));
  }
  return out;
}

void expect_valid_curve(const std::vector<RocPoint>& c) {
  ASSERT_GE(c.size(), 2u);
  EXPECT_EQ(c.front().fpr, 0.0);
  EXPECT_EQ(c.front().tpr, 0.0);
  EXPECT_TRUE(std::isinf(c.front().threshold));
  EXPECT_EQ(c.back().fpr, 1.0);
  EXPECT_EQ(c.back().tpr, 1.0);
  for (std::size_t i = 1; i < c.size(); ++i) {
    EXPECT_GE(c[i].fpr, c[i - 1].fpr);
    EXPECT_GE(c[i].tpr, c[i - 1].tpr);
    EXPECT_LT(c[i].threshold, c[i - 1].threshold);
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Confusion, WorkedExamples) {
  EXPECT_EQ(confusion({1, 0, 1}, {1, 0, 1}), (Confusion{2, 0, 1, 0}));
  const auto c = confusion({1, 1, 1, 0}, {1, 0, 1, 1});
  EXPECT_EQ(c.tp, 2u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.tn, 0u);
}

TEST(Confusion, Errors) {
  EXPECT_THROW(confusion({}, {}), InputError);
  EXPECT_THROW(confusion({1}, {1, 0}), InputError);
  EXPECT_THROW(confusion({2}, {1}), InputError);
  EXPECT_THROW(confusion({1}, {-1}), InputError);
}

TEST(F1, WorkedExamples) {
  EXPECT_EQ(f1(3, 0, 0).value, 1.0);
  EXPECT_FALSE(f1(3, 0, 0).degenerate);
  EXPECT_EQ(f1(2, 1, 1).value, 2.0 / 3.0);
  EXPECT_NEAR(f1(2, 1, 1).value, 0.666667, 5e-7);
  EXPECT_EQ(f1(0, 0, 0).value, 0.0);
  EXPECT_TRUE(f1(0, 0, 0).degenerate);
  EXPECT_TRUE(f1(0, 4, 2).degenerate);
}

TEST(F1, MatchesPrecisionRecallForm) {
  for (std::size_t tp = 1; tp < 20; ++tp)
    for (std::size_t fp = 0; fp < 20; ++fp)
      for (std::size_t fn = 0; fn < 20; ++fn) {
        const double p = double(tp) / double(tp + fp), r = double(tp) / double(tp + fn);
        EXPECT_NEAR(f1(tp, fp, fn).value, 2 * p * r / (p + r), 1e-15);
      }
}

TEST(Roc, HandTraces) {
  const auto good = roc_curve({0.9, 0.1}, {1, 0});
  ASSERT_EQ(good.size(), 3u);
  EXPECT_EQ(good[1].fpr, 0.0);
  EXPECT_EQ(good[1].tpr, 1.0);
  EXPECT_EQ(auc(good), 1.0);

  const auto bad = roc_curve({0.1, 0.9}, {1, 0});
  ASSERT_EQ(bad.size(), 3u);
  EXPECT_EQ(bad[1].fpr, 1.0);
  EXPECT_EQ(bad[1].tpr, 0.0);
  EXPECT_EQ(auc(bad), 0.0);

  EXPECT_EQ(auc(roc_curve({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1})), 0.75);
}

TEST(Roc, PerfectSeparationPassesThroughTopLeft) {
  const auto c = roc_curve({0.2, 0.3, 0.7, 0.95, 0.8}, {0, 0, 1, 1, 1});
  EXPECT_NE(std::find_if(c.begin(), c.end(), [](const RocPoint& p) { return p.fpr == 0 && p.tpr == 1; }), c.end());
}

TEST(Roc, SingleClassIsAnError) {
  EXPECT_THROW(roc_curve({0.1, 0.2}, {1, 1}), MetricError);
  EXPECT_THROW(roc_curve({0.1, 0.2}, {0, 0}), MetricError);
  EXPECT_THROW(roc_curve({0.1}, {0, 1}), InputError);
}

TEST(Auc, EqualsPairwiseStatistic) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto set = random_set(rng, trial % 2 == 0);
    EXPECT_NEAR(auc(roc_curve(set.scores, set.labels)), pairwise_auc(set.scores, set.labels), 1e-12);
  }
}

TEST(Auc, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto set = random_set(rng, trial % 2 == 0);
    const double base = auc(roc_curve(set.scores, set.labels));
    auto cube = set.scores, logistic = set.scores;
    for (auto& s : cube) s = s * s * s;
    for (auto& s : logistic) s = 1 / (1 + std::exp(-(5 * s - 2.5)));
    EXPECT_NEAR(auc(roc_curve(cube, set.labels)), base, 1e-12);
    EXPECT_NEAR(auc(roc_curve(logistic, set.labels)), base, 1e-12);
  }
}

TEST(Roc, InvariantsOnFuzzedInputs) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto set = random_set(rng, trial % 3 == 0);
    const auto c = roc_curve(set.scores, set.labels);
    expect_valid_curve(c);
    const double a = auc(c);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(Evaluate, AllCorrect) {
  std::vector<Prediction> preds;
  std::vector<std::pair<std::string, int>> labels;
  for (int i = 0; i < 10; ++i) {
    preds.push_back({"v" + std::to_string(i), i % 2 == 1, i % 2 ? 0.9 : 0.1});
    labels.emplace_back("v" + std::to_string(i), i % 2);
  }
  const auto ev = evaluate_run(preds, labels);
  EXPECT_EQ(ev.report.accuracy, 1.0);
  EXPECT_EQ(ev.report.f1, 1.0);
  EXPECT_EQ(ev.report.n_items, 10u);
  EXPECT_EQ(ev.report.tp + ev.report.fp + ev.report.tn + ev.report.fn, 10u);
  ASSERT_TRUE(ev.report.auc.has_value());
  EXPECT_EQ(*ev.report.auc, 1.0);
}

TEST(Evaluate, MissingLabelNamesTheId) {
  try {
    evaluate_run({{"a", true, 0.9}, {"ghost", false, 0.1}}, {{"a", 1}});
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

TEST(Evaluate, NoScoresOrOneClassLeavesAucEmpty) {
  EXPECT_FALSE(evaluate_run({{"a", true, std::nullopt}, {"b", false, 0.2}}, {{"a", 1}, {"b", 0}}).report.auc);
  const auto one = evaluate_run({{"a", true, 0.9}, {"b", false, 0.2}}, {{"a", 1}, {"b", 1}});
  EXPECT_FALSE(one.report.auc);
  EXPECT_TRUE(one.roc.empty());
}

TEST(Emit, RoundTripAndDeterminism) {
  const fs::path dir = fs::temp_directory_path() / ("deepshield_metrics_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  std::mt19937_64 rng(4);
  std::vector<Prediction> preds;
  std::vector<std::pair<std::string, int>> labels;
  for (int i = 0; i < 37; ++i) {
    const double s = std::uniform_real_distribution<double>(0, 1)(rng);
    const int y = static_cast<int>(rng() % 2);
    preds.push_back({"v" + std::to_string(i), s >= 0.55, s});
    labels.emplace_back("v" + std::to_string(i), y);
  }
  const auto ev = evaluate_run(preds, labels);
  emit(ev, dir / "a");
  emit(ev, dir / "b");
  EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));
  EXPECT_EQ(slurp(dir / "a" / "roc.csv"), slurp(dir / "b" / "roc.csv"));

  const auto back = report_from_json(nlohmann::json::parse(slurp(dir / "a" / "report.json")), "report");
  EXPECT_EQ(back, ev.report);
  // The emitted counts reproduce the emitted rates exactly.
  const auto again = make_report({back.tp, back.fp, back.tn, back.fn});
  EXPECT_EQ(again.f1, back.f1);
  EXPECT_EQ(again.accuracy, back.accuracy);

  std::ifstream csv(dir / "a" / "roc.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "fpr,tpr,threshold");
  std::vector<RocPoint> parsed;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    parsed.push_back({std::stod(a), std::stod(b), c == "inf" ? INFINITY : std::stod(c)});
  }
  EXPECT_EQ(parsed, ev.roc);
  fs::remove_all(dir);
}
