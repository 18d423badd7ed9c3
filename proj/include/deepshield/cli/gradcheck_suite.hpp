#pragma once

#include <string>
#include <vector>

namespace deepshield::cli {

struct GradCheckRow {
  std::string name;
  double max_error = 0;  // worst case over seeds and shapes
  double tolerance = 0;
  bool passed() const { return max_error < tolerance; }
};

struct GradCheckOptions {
  /// "tiny": one shape per op, 5 seeds. "full": two shapes per op, 10 seeds,
  /// plus the encoder, fusion and backbone assemblies.
  std::string profile = "tiny";
  /// Test hook: perturbs the analytic gradient of the named check.
  std::string corrupt_op;
};

/// Finite-difference checks in double precision (eps 1e-5): every
/// differentiable op against 1e-4, and end-to-end tiny models of both kinds
/// (image 16) against 1e-3. Deterministic for a given profile.
std::vector<GradCheckRow> run_gradcheck_suite(const GradCheckOptions& options);

std::string format_gradcheck_table(const std::vector<GradCheckRow>& rows);

}  // namespace deepshield::cli
