#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "deepshield/cli/commands.hpp"
#include "deepshield/cli/run_config.hpp"
#include "deepshield/cli/train.hpp"
#include "deepshield/data/synth.hpp"
#include "deepshield/errors.hpp"
#include "deepshield/transformer/checkpoint.hpp"
#include "deepshield/transformer/models.hpp"

using namespace deepshield;
using namespace deepshield::cli;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::vector<const char*> argv{"deepshield"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// One corpus (4 videos x 3 frames) and one untrained checkpoint shared by the suite.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("deepshield_cli_" + std::to_string(::getpid()));
    fs::create_directories(root_);
    data::SynthConfig s;
    s.name = "clip";
    s.n_videos = 4;
    s.frames_per_video = 3;
    s.seed = 9;
    spit(root_ / "synth.json", data::to_json(s).dump());
    data::synthesize_corpus(s, root_ / "corpus", nullptr);

    RunConfig rc;
    rc.paths.train_manifest = (root_ / "corpus/manifest.jsonl").string();
    rc.paths.val_manifest = rc.paths.train_manifest;
    rc.paths.checkpoint_dir = (root_ / "ckpt").string();
    rc.training.epochs = 1;
    rc.training.batch_size = 4;
    spit(root_ / "run.json", format_run_config(rc));
    transformer::save_model(*transformer::make_detector<float>(rc.model, 1), root_ / "model.ckpt");
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path dir(const std::string& name) { return root_ / name; }
  static std::string path(const std::string& name) { return (root_ / name).string(); }

  static inline fs::path root_;
};

TEST(ExitCodes, MapsEveryErrorFamily) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(InputError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(DimensionError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(MetricError("x")), kExitConfig);
  EXPECT_EQ(exit_code_for(IoError("x")), kExitIo);
  EXPECT_EQ(exit_code_for(LoadError("x")), kExitIo);
  EXPECT_EQ(exit_code_for(NumericError("x")), kExitNumeric);
  EXPECT_EQ(exit_code_for(MismatchError("x")), kExitMismatch);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kExitCheckFailed);
}

TEST(Parsing, UnknownSubcommandAndMissingFlags) {
  EXPECT_EQ(cli({}).code, kExitConfig);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(cli({"synth", "--out", "x"}).code, kExitConfig);
  EXPECT_EQ(cli({"infer", "--config", "a", "--checkpoint", "b", "--manifest", "c", "--out", "d", "--rule", "median"})
                .code,
            kExitConfig);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(RunConfigFile, ResolvedEchoReparsesEqual) {
  RunConfig c;
  c.model = presets::by_name("desk_cross_vit");
  c.augment.final_size = c.model.image_size;
  c.augment.rotation.p = 0.25;
  c.training.momentum = 0.9;
  c.inference.rule = videoinfer::Rule::average;
  c.inference.max_faces = 7;
  c.paths.out_dir = "out";
  const auto text = format_run_config(c);
  const auto back = run_config_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back, c);
  EXPECT_EQ(format_run_config(back), text);
}

TEST(RunConfigFile, PresetFormExpands) {
  const auto c = run_config_from_json(nlohmann::json::parse(R"({"model": {"preset": "desk_cross_vit_plain"}})"));
  EXPECT_EQ(c.model, presets::by_name("desk_cross_vit_plain"));
  EXPECT_EQ(c.augment.final_size, c.model.image_size);
}

TEST(RunConfigFile, UnknownKeysAndBadValuesRejected) {
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"trainig": {}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"training": {"lr": 0.1}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"model": {"preset": "resnet"}})")), ConfigError);
  try {
    run_config_from_json(nlohmann::json::parse(R"({"inference": {"threshold": 1.5}})"));
    FAIL() << "threshold 1.5 accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("threshold"), std::string::npos) << e.what();
  }
}

TEST_F(CliTest, SynthBadFractionNamesField) {
  auto j = nlohmann::json::parse(slurp(dir("synth.json")));
  j["fake_fraction"] = 1.5;
  spit(dir("bad_synth.json"), j.dump());
  const auto r = cli({"synth", "--config", path("bad_synth.json"), "--out", path("bad_corpus")});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("fake_fraction"), std::string::npos) << r.err;
}

TEST_F(CliTest, SynthRerunReportsUnchanged) {
  const auto first = cli({"synth", "--config", path("synth.json"), "--out", path("resynth")});
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_EQ(first.out.find("unchanged"), std::string::npos);
  EXPECT_NE(first.out.find("4 videos"), std::string::npos) << first.out;
  const auto second = cli({"synth", "--config", path("synth.json"), "--out", path("resynth")});
  EXPECT_NE(second.out.find("corpus unchanged"), std::string::npos) << second.out;
  EXPECT_EQ(slurp(dir("resynth/manifest.jsonl")), slurp(dir("corpus/manifest.jsonl")));
}

TEST_F(CliTest, MissingConfigIsIoError) {
  EXPECT_EQ(cli({"train", "--config", path("nope.json")}).code, kExitIo);
  spit(dir("broken.json"), "{\"training\": ");
  EXPECT_EQ(cli({"train", "--config", path("broken.json")}).code, kExitConfig);
}

TEST_F(CliTest, TrainOneEpochProducesCheckpointsAndLog) {
  const auto r = cli({"train", "--config", path("run.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir("ckpt/epoch_001.ckpt/meta.json")));
  EXPECT_TRUE(fs::exists(dir("ckpt/best.ckpt/weights.bin")));
  std::istringstream log(slurp(dir("ckpt/train_log.csv")));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(log, line)) ++rows;
  EXPECT_EQ(rows, 2u);
  EXPECT_EQ(load_run_config(dir("ckpt/resolved_config.json")), load_run_config(dir("run.json")));
}

TEST_F(CliTest, InferWritesOneVerdictPerVideoAndHonorsOverrides) {
  const auto r = cli({"infer", "--config", path("run.json"), "--checkpoint", path("model.ckpt"), "--manifest",
                      path("corpus/manifest.jsonl"), "--out", path("infer"), "--rule", "average", "--max-faces",
                      "1000", "--dump-scores"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto verdicts = videoinfer::load_verdicts(dir("infer/verdicts.jsonl"));
  ASSERT_EQ(verdicts.size(), 4u);
  for (const auto& v : verdicts) {
    EXPECT_EQ(v.rule, videoinfer::Rule::average);
    EXPECT_GE(v.faces_used, 3u);  // every face of the video
  }
  const auto resolved = load_run_config(dir("infer/resolved_config.json"));
  EXPECT_EQ(resolved.inference.rule, videoinfer::Rule::average);
  EXPECT_EQ(resolved.inference.max_faces, 1000u);
  EXPECT_TRUE(fs::exists(dir("infer/faces.jsonl")));
}

TEST_F(CliTest, InferRejectsMismatchedCheckpoint) {
  transformer::save_model(*transformer::make_detector<float>(presets::by_name("desk_cross_vit"), 1),
                          dir("cross.ckpt"));
  const auto r = cli({"infer", "--config", path("run.json"), "--checkpoint", path("cross.ckpt"), "--manifest",
                      path("corpus/manifest.jsonl"), "--out", path("mismatch")});
  EXPECT_EQ(r.code, kExitMismatch) << r.err;
}

TEST_F(CliTest, EvalPerfectVerdictsAndSummaryMatchesReport) {
  const auto manifest = data::load_manifest(dir("corpus/manifest.jsonl"));
  std::string lines;
  for (const auto& l : data::video_labels(manifest)) {
    videoinfer::VideoVerdict v;
    v.video_id = l.video_id;
    v.max_actor_score = v.mean_score = l.label ? 0.9 : 0.1;
    v.fake = l.label == 1;
    v.faces_used = 1;
    v.aggregates = {{"actor0", v.max_actor_score, 1}};
    lines += to_json(v).dump() + "\n";
  }
  spit(dir("perfect.jsonl"), lines);
  const auto r = cli({"eval", "--verdicts", path("perfect.jsonl"), "--labels", path("corpus/labels.jsonl"), "--out",
                      path("eval")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("AUC=1.0000 F1=1.0000 ACC=1.0000"), std::string::npos) << r.out;
  const auto report = nlohmann::json::parse(slurp(dir("eval/report.json")));
  EXPECT_EQ(report["f1"].get<double>(), 1.0);
  EXPECT_EQ(report["auc"].get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(dir("eval/roc.csv")));
}

TEST_F(CliTest, EvalMissingLabelNamesVideo) {
  std::istringstream in(slurp(dir("corpus/labels.jsonl")));
  std::string line, kept, dropped;
  std::getline(in, dropped);
  while (std::getline(in, line)) kept += line + "\n";
  spit(dir("short_labels.jsonl"), kept);
  ASSERT_EQ(cli({"infer", "--config", path("run.json"), "--checkpoint", path("model.ckpt"), "--manifest",
                 path("corpus/manifest.jsonl"), "--out", path("infer_for_eval")})
                .code,
            0);
  const auto r = cli({"eval", "--verdicts", path("infer_for_eval/verdicts.jsonl"), "--labels",
                      path("short_labels.jsonl"), "--out", path("eval_short")});
  EXPECT_EQ(r.code, kExitConfig);
  const auto id = nlohmann::json::parse(dropped)["video_id"].get<std::string>();
  EXPECT_NE(r.err.find(id), std::string::npos) << r.err;
}

TEST_F(CliTest, EvalFaceLevelReport) {
  ASSERT_EQ(cli({"infer", "--config", path("run.json"), "--checkpoint", path("model.ckpt"), "--manifest",
                 path("corpus/manifest.jsonl"), "--out", path("infer_faces"), "--dump-scores"})
                .code,
            0);
  const auto r = cli({"eval", "--verdicts", path("infer_faces/verdicts.jsonl"), "--labels",
                      path("corpus/labels.jsonl"), "--out", path("eval_faces"), "--face-scores",
                      path("infer_faces/faces.jsonl"), "--manifest", path("corpus/manifest.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir("eval_faces/faces/report.json")));
  EXPECT_NE(r.out.find("faces: AUC="), std::string::npos);
}

TEST(Gradcheck, CorruptedOpFailsAndIsNamed) {
  const auto r = cli({"gradcheck", "--corrupt-op", "softmax"});
  EXPECT_EQ(r.code, kExitCheckFailed);
  EXPECT_NE(r.out.find("FAILED: softmax"), std::string::npos) << r.out;
}

TEST(Gradcheck, TinyProfilePassesAndRepeats) {
  const auto a = cli({"gradcheck"});
  EXPECT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(cli({"gradcheck", "--profile", "tiny"}).out, a.out);
}

}  // namespace
