#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace deepshield::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumeric = 4,
  kExitMismatch = 5,
};

/// Maps a library exception onto the exit-code table.
int exit_code_for(const std::exception& e);

struct SynthArgs {
  std::filesystem::path config;  // a SynthConfig document
  std::filesystem::path out;
};

struct TrainArgs {
  std::filesystem::path config;
  std::optional<std::size_t> epochs;
};

struct InferArgs {
  std::filesystem::path config;
  std::filesystem::path checkpoint;
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::optional<std::string> rule;
  std::optional<std::size_t> max_faces;
  bool dump_scores = false;
};

struct EvalArgs {
  std::filesystem::path verdicts;
  std::filesystem::path labels;
  std::filesystem::path out;
  // Face-level diagnostics: faces.jsonl from `infer --dump-scores` plus the
  // manifest holding the face labels.
  std::filesystem::path face_scores;
  std::filesystem::path manifest;
  double face_threshold = 0.55;
};

struct GradcheckArgs {
  std::string profile = "tiny";
  std::string corrupt_op;
};

// Each command throws on failure; run_cli turns exceptions into exit codes.
int cmd_synth(const SynthArgs& args, std::ostream& out);
int cmd_train(const TrainArgs& args, std::ostream& out);
int cmd_infer(const InferArgs& args, std::ostream& out);
int cmd_eval(const EvalArgs& args, std::ostream& out);
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out);

/// Parses argv, dispatches, and reports errors on `err` as "error: ...".
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace deepshield::cli
