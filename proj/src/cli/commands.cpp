#include "deepshield/cli/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>

#include "deepshield/cli/gradcheck_suite.hpp"
#include "deepshield/cli/run_config.hpp"
#include "deepshield/cli/train.hpp"
#include "deepshield/data/synth.hpp"
#include "deepshield/errors.hpp"
#include "deepshield/json_util.hpp"
#include "deepshield/metrics/metrics.hpp"
#include "deepshield/transformer/checkpoint.hpp"
#include "deepshield/videoinfer/videoinfer.hpp"

namespace deepshield::cli {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const MismatchError*>(&e)) return kExitMismatch;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const LoadError*>(&e)) return kExitIo;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InputError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const MetricError*>(&e)) {
    return kExitConfig;
  }
  return kExitCheckFailed;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  data::write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string summary_line(const metrics::MetricsReport& r) {
  return "AUC=" + (r.auc ? fixed4(*r.auc) : std::string("n/a")) + " F1=" + fixed4(r.f1) + " ACC=" + fixed4(r.accuracy);
}

std::vector<videoinfer::FaceScore> load_face_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open face scores " + path.string());
  std::vector<videoinfer::FaceScore> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const auto j = nlohmann::json::parse(line);
      json::ObjectReader r(j, "");
      videoinfer::FaceScore s;
      r.required("video_id", s.video_id);
      r.required("actor_id", s.actor_id);
      r.required("frame_index", s.frame_index);
      r.required("prob", s.prob);
      r.finish();
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(where + ": malformed JSON: " + e.what());
    } catch (const ConfigError& e) {
      throw LoadError(where + ": " + e.what());
    }
  }
  return out;
}

std::string face_key(const std::string& video, std::uint64_t frame, const std::string& actor) {
  data::FaceRecord r;
  r.video_id = video;
  r.frame_index = frame;
  r.actor_id = actor;
  return r.key();
}

}  // namespace

int cmd_synth(const SynthArgs& args, std::ostream& out) {
  const auto config = data::synth_from_json(read_json_file(args.config), "synth");
  const auto s = data::synthesize_corpus(config, args.out);
  out << "corpus " << config.name << ": " << s.videos << " videos (" << s.videos - s.fake_videos << " real, "
      << s.fake_videos << " fake), " << s.faces << " faces (" << s.faces - s.fake_faces << " real, " << s.fake_faces
      << " fake)\n";
  out << "artifact tracks:";
  for (const auto& [kind, count] : s.artifact_tracks) out << " " << kind << "=" << count;
  out << "\n";
  out << "content hash " << s.content_hash << (s.unchanged ? " (corpus unchanged)" : "") << "\n";
  return kExitOk;
}

int cmd_train(const TrainArgs& args, std::ostream& out) {
  auto config = load_run_config(args.config);
  if (args.epochs) {
    config.training.epochs = *args.epochs;
    config.validate();
  }
  const auto result = train(config, &out);
  const auto& best = result.log.at(result.best_epoch - 1);
  out << "best epoch " << best.epoch << " (val_auc " << fixed4(best.val_auc) << ", val_f1 " << fixed4(best.val_f1)
      << ")\n";
  return kExitOk;
}

int cmd_infer(const InferArgs& args, std::ostream& out) {
  auto config = load_run_config(args.config);
  if (args.rule) config.inference.rule = videoinfer::parse_rule(*args.rule);
  if (args.max_faces) config.inference.max_faces = *args.max_faces;
  config.validate();

  const auto stored = transformer::load_model_config(args.checkpoint);
  if (!(stored == config.model)) {
    throw MismatchError("checkpoint " + args.checkpoint.string() + " holds a " + transformer::to_string(stored.kind) +
                        " model whose configuration differs from the run config's model section");
  }
  const auto model = transformer::load_model<float>(args.checkpoint);
  const auto manifest = data::load_manifest(args.manifest);
  const data::ImageCache cache(manifest);
  const videoinfer::ScoringInputs inputs{&manifest, &cache, config.model.image_size, config.normalization};
  const auto result = videoinfer::infer_videos(videoinfer::detector_scorer(*model), inputs, config.inference);

  ensure_dir(args.out);
  write_resolved_config(config, args.out);
  write_text(args.out / "verdicts.jsonl", videoinfer::format_verdicts(result.verdicts));
  if (args.dump_scores) write_text(args.out / "faces.jsonl", videoinfer::format_face_scores(result.faces));
  std::size_t fakes = 0;
  for (const auto& v : result.verdicts) fakes += v.fake ? 1 : 0;
  out << result.verdicts.size() << " videos: " << fakes << " fake, " << result.verdicts.size() - fakes << " real ("
      << videoinfer::to_string(config.inference.rule) << ", threshold " << config.inference.threshold
      << ", max_faces " << config.inference.max_faces << ")\n";
  return kExitOk;
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  const auto verdicts = videoinfer::load_verdicts(args.verdicts);
  std::vector<std::pair<std::string, int>> labels;
  for (const auto& l : data::load_labels(args.labels)) labels.emplace_back(l.video_id, l.label);
  std::vector<metrics::Prediction> preds;
  preds.reserve(verdicts.size());
  for (const auto& v : verdicts) preds.push_back({v.video_id, v.fake, v.video_score()});
  const auto evaluation = metrics::evaluate_run(preds, labels);
  metrics::emit(evaluation, args.out);

  if (!args.face_scores.empty()) {
    if (args.manifest.empty()) throw ConfigError("--face-scores needs --manifest for the face labels");
    const auto manifest = data::load_manifest(args.manifest, {.check_images = false});
    std::vector<std::pair<std::string, int>> face_labels;
    for (const auto& r : manifest.records) face_labels.emplace_back(r.key(), r.label);
    const double threshold = args.face_threshold;
    std::vector<metrics::Prediction> face_preds;
    for (const auto& s : load_face_scores(args.face_scores)) {
      face_preds.push_back({face_key(s.video_id, s.frame_index, s.actor_id), s.prob >= threshold, s.prob});
    }
    const auto faces = metrics::evaluate_run(face_preds, face_labels);
    const auto face_dir = args.out / "faces";
    metrics::emit(faces, face_dir);
    out << "faces: " << summary_line(faces.report) << "\n";
  }
  out << summary_line(evaluation.report) << "\n";
  return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out) {
  const auto rows = run_gradcheck_suite({args.profile, args.corrupt_op});
  out << format_gradcheck_table(rows);
  std::string failed;
  for (const auto& r : rows) {
    if (!r.passed()) failed += (failed.empty() ? "" : ", ") + r.name;
  }
  if (!failed.empty()) {
    out << "gradcheck FAILED: " << failed << "\n";
    return kExitCheckFailed;
  }
  out << "gradcheck passed: " << rows.size() << " checks\n";
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deepfake detection with hybrid convolutional/transformer models"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic face-crop corpus");
  s->add_option("--config", synth.config, "SynthConfig JSON file")->required();
  s->add_option("--out", synth.out, "Output directory")->required();

  TrainArgs train_args;
  auto* t = app.add_subcommand("train", "Train a detector");
  t->add_option("--config", train_args.config, "Run config JSON file")->required();
  t->add_option("--epochs", train_args.epochs, "Override training.epochs");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Video-level inference on a manifest");
  i->add_option("--config", infer.config, "Run config JSON file")->required();
  i->add_option("--checkpoint", infer.checkpoint, "Checkpoint directory")->required();
  i->add_option("--manifest", infer.manifest, "Manifest to score (labels ignored)")->required();
  i->add_option("--out", infer.out, "Output directory")->required();
  i->add_option("--rule", infer.rule, "Override inference.rule")->check(CLI::IsMember({"voting", "average"}));
  i->add_option("--max-faces", infer.max_faces, "Override inference.max_faces");
  i->add_flag("--dump-scores", infer.dump_scores, "Also write faces.jsonl");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score verdicts against video labels");
  e->add_option("--verdicts", eval.verdicts, "verdicts.jsonl from infer")->required();
  e->add_option("--labels", eval.labels, "JSON-Lines {video_id, label}")->required();
  e->add_option("--out", eval.out, "Output directory")->required();
  e->add_option("--face-scores", eval.face_scores, "faces.jsonl for an extra face-level report");
  e->add_option("--manifest", eval.manifest, "Manifest with face labels (with --face-scores)");
  e->add_option("--face-threshold", eval.face_threshold, "Face-level decision threshold")
      ->check(CLI::Range(0.0, 1.0));

  GradcheckArgs grad;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  g->add_option("--profile", grad.profile, "tiny or full")->check(CLI::IsMember({"tiny", "full"}));
  g->add_option("--corrupt-op", grad.corrupt_op)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    if (pe.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << pe.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*t) return cmd_train(train_args, out);
    if (*i) return cmd_infer(infer, out);
    if (*e) return cmd_eval(eval, out);
    return cmd_gradcheck(grad, out);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_code_for(ex);
  }
}

}  // namespace deepshield::cli
