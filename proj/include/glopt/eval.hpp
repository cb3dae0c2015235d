#pragma once

// Held-out evaluation: model vs spline baseline on fresh cases drawn from
// the evaluation seed namespace, plus report writers.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "glopt/funcgen.hpp"
#include "glopt/model.hpp"
#include "glopt/json_io.hpp"

namespace glopt {

inline constexpr double kSuccessTight = 0.10;
inline constexpr double kSuccessLoose = 0.15;
inline constexpr double kHistogramBin = 0.025;

struct CaseResult {
  std::uint64_t seed = 0;
  double x_star = 0.0;
  double x0 = 0.0;       // spline argmin
  double x_final = 0.0;  // model output
  double spline_error = 0.0;
  double model_error = 0.0;
  int iterations = 0;
  std::string stop_reason;
  /// Supplemental: f(x_T) - f(x*) and f(x0) - f(x*).
  double value_gap = 0.0;
  double spline_value_gap = 0.0;
};

struct GenerationFailure {
  std::uint64_t seed = 0;
  std::string message;
};

struct ErrorStats {
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for n < 2
  double best = 0.0;
  double worst = 0.0;
  double success_tight = 0.0;  // fraction with error < 0.10
  double success_loose = 0.0;  // fraction with error < 0.15
};

ErrorStats error_stats(std::span<const double> errors);

struct EvalReport {
  std::string preset;
  std::uint64_t seed = 0;
  std::size_t n_requested = 0;
  std::vector<CaseResult> cases;
  std::vector<GenerationFailure> failures;

  ErrorStats model;
  ErrorStats spline;
  std::uint64_t best_case_seed = 0;
  double improvement = 0.0;        // spline mean - model mean
  double improved_fraction = 0.0;  // model_error < spline_error
};

/// Recomputes every aggregate of `r` from `r.cases`.
void summarize(EvalReport& r);

using Predictor = std::function<Trajectory(const ModelInputs&)>;

/// Case i uses seed case_seed(seed, kEvaluation, i). Both methods see the
/// same noisy samples. Cases whose generation fails are listed in
/// `failures` and skipped.
EvalReport evaluate(const Predictor& predict, const DifficultyPreset& preset, std::size_t n_cases, std::uint64_t seed,
                    int threads = 1);
EvalReport evaluate(const Model<float>& model, const DifficultyPreset& preset, std::size_t n_cases,
                    std::uint64_t seed, int threads = 1);

/// Predictor returning x0 unchanged.
Trajectory identity_trajectory(const ModelInputs& in);

struct BaselineReport {
  std::string preset;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> errors;
  std::vector<GenerationFailure> failures;
  ErrorStats stats;
};

/// Spline-only error distribution over fresh evaluation cases.
BaselineReport spline_baseline(const DifficultyPreset& preset, std::size_t n_cases, std::uint64_t seed);

/// Summary fields of report.json; `with_cases` adds the per-case records.
Json report_json(const EvalReport& r, bool with_cases = false);

/// Writes report.json, report.txt, histogram.csv and cases.jsonl.
void write_report(const EvalReport& r, const std::filesystem::path& dir);

std::string report_text(const EvalReport& r);
std::string histogram_csv(const EvalReport& r);

}  // namespace glopt
