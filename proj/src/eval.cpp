#include "glopt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <optional>
#include <thread>

#include "glopt/errors.hpp"
#include "glopt/json_io.hpp"
#include "glopt/rng.hpp"

namespace glopt {

ErrorStats error_stats(std::span<const double> errors) {
  ErrorStats s;
  s.n = errors.size();
  if (s.n == 0) return s;
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  std::size_t tight = 0, loose = 0;
  for (double e : errors) {
    sum += e;
    tight += e < kSuccessTight ? 1 : 0;
    loose += e < kSuccessLoose ? 1 : 0;
  }
  const double n = static_cast<double>(s.n);
  s.mean = sum / n;
  s.median = s.n % 2 == 1 ? sorted[s.n / 2] : 0.5 * (sorted[s.n / 2 - 1] + sorted[s.n / 2]);
  if (s.n > 1) {
    double ss = 0.0;
    for (double e : errors) ss += (e - s.mean) * (e - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  s.best = sorted.front();
  s.worst = sorted.back();
  s.success_tight = static_cast<double>(tight) / n;
  s.success_loose = static_cast<double>(loose) / n;
  return s;
}

void summarize(EvalReport& r) {
  std::vector<double> model, spline;
  std::size_t improved = 0;
  for (const auto& c : r.cases) {
    model.push_back(c.model_error);
    spline.push_back(c.spline_error);
    improved += c.model_error < c.spline_error ? 1 : 0;
  }
  r.model = error_stats(model);
  r.spline = error_stats(spline);
  r.improvement = r.spline.mean - r.model.mean;
  r.improved_fraction = r.cases.empty() ? 0.0 : static_cast<double>(improved) / static_cast<double>(r.cases.size());
  r.best_case_seed = 0;
  double best = 2.0;
  for (const auto& c : r.cases) {
    if (c.model_error < best) {
      best = c.model_error;
      r.best_case_seed = c.seed;
    }
  }
}

Trajectory identity_trajectory(const ModelInputs& in) {
  Trajectory t;
  t.x0 = in.x0;
  t.x_final = in.x0;
  t.stop_reason = StopReason::kFixedUnroll;
  return t;
}

namespace {

struct Slot {
  std::optional<CaseResult> result;
  std::optional<GenerationFailure> failure;
  std::exception_ptr error;
};

CaseResult run_case(const Predictor& predict, const Case& c) {
  const ModelInputs in = make_inputs(c.samples);
  const Trajectory traj = predict(in);
  CaseResult r;
  r.seed = c.seed;
  r.x_star = c.function.argmin_true;
  r.x0 = in.x0;
  r.x_final = traj.x_final;
  r.spline_error = std::abs(r.x0 - r.x_star);
  r.model_error = std::abs(r.x_final - r.x_star);
  r.iterations = static_cast<int>(traj.steps.size());
  r.stop_reason = to_string(traj.stop_reason);
  const double f_star = c.function(r.x_star);
  r.value_gap = c.function(std::clamp(r.x_final, 0.0, 1.0)) - f_star;
  r.spline_value_gap = c.function(r.x0) - f_star;
  return r;
}

}  // namespace

EvalReport evaluate(const Predictor& predict, const DifficultyPreset& preset, std::size_t n_cases, std::uint64_t seed,
                    int threads) {
  if (n_cases == 0) throw std::invalid_argument("evaluate: n_cases must be >= 1");
  std::vector<Slot> slots(n_cases);
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n_cases; i += stride) {
      const std::uint64_t s = case_seed(seed, SeedDomain::kEvaluation, i);
      try {
        Case c;
        try {
          c = make_case(preset, s);
        } catch (const GenerationFailedError& e) {
          slots[i].failure = GenerationFailure{s, e.what()};
          continue;
        }
        slots[i].result = run_case(predict, c);
      } catch (...) {
        slots[i].error = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, threads));
  if (n_threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(work, k, n_threads);
    for (auto& t : pool) t.join();
  }
  EvalReport r;
  r.preset = preset.name;
  r.seed = seed;
  r.n_requested = n_cases;
  for (auto& s : slots) {
    if (s.error) std::rethrow_exception(s.error);
    if (s.failure) r.failures.push_back(*s.failure);
    if (s.result) r.cases.push_back(*s.result);
  }
  summarize(r);
  return r;
}

EvalReport evaluate(const Model<float>& model, const DifficultyPreset& preset, std::size_t n_cases,
                    std::uint64_t seed, int threads) {
  if (preset.n_samples != model.config().n_samples) {
    throw std::invalid_argument("preset n_samples " + std::to_string(preset.n_samples) +
                                " does not match the model's " + std::to_string(model.config().n_samples));
  }
  return evaluate([&](const ModelInputs& in) { return model.run(in); }, preset, n_cases, seed, threads);
}

BaselineReport spline_baseline(const DifficultyPreset& preset, std::size_t n_cases, std::uint64_t seed) {
  if (n_cases == 0) throw std::invalid_argument("spline_baseline: n_cases must be >= 1");
  BaselineReport b;
  b.preset = preset.name;
  b.seed = seed;
  for (std::size_t i = 0; i < n_cases; ++i) {
    const std::uint64_t s = case_seed(seed, SeedDomain::kEvaluation, i);
    try {
      const Case c = make_case(preset, s);
      const SplineFit fit = fit_interpolating_spline(c.samples.xs, c.samples.ys);
      b.seeds.push_back(s);
      b.errors.push_back(std::abs(spline_argmin(fit, GridSpec(kOracleGrid)) - c.function.argmin_true));
    } catch (const GenerationFailedError& e) {
      b.failures.push_back({s, e.what()});
    }
  }
  b.stats = error_stats(b.errors);
  return b;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

Json stats_json(const ErrorStats& s) {
  Json j;
  j["n"] = s.n;
  j["mean"] = s.mean;
  j["median"] = s.median;
  j["std"] = s.std;
  j["best"] = s.best;
  j["worst"] = s.worst;
  j["success_at_0.10"] = s.success_tight;
  j["success_at_0.15"] = s.success_loose;
  return j;
}

Json case_json(const CaseResult& c) {
  Json j;
  j["seed"] = seed_to_string(c.seed);
  j["x_star"] = c.x_star;
  j["x0"] = c.x0;
  j["x_final"] = c.x_final;
  j["spline_error"] = c.spline_error;
  j["model_error"] = c.model_error;
  j["iterations"] = c.iterations;
  j["stop_reason"] = c.stop_reason;
  j["value_gap"] = c.value_gap;
  j["spline_value_gap"] = c.spline_value_gap;
  return j;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%7.2f%%", 100.0 * v);
  return buf;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

}  // namespace

std::string report_text(const EvalReport& r) {
  std::string s;
  s += "preset " + r.preset + ", seed " + seed_to_string(r.seed) + ", " + std::to_string(r.cases.size()) + " of " +
       std::to_string(r.n_requested) + " cases evaluated";
  s += r.failures.empty() ? "\n\n" : " (" + std::to_string(r.failures.size()) + " generation failures)\n\n";
  s += "metric              spline      model\n";
  auto row = [&](const char* name, double a, double b) { s += std::string(name) + pct(a) + "   " + pct(b) + "\n"; };
  row("mean error        ", r.spline.mean, r.model.mean);
  row("median error      ", r.spline.median, r.model.median);
  row("std               ", r.spline.std, r.model.std);
  row("best case         ", r.spline.best, r.model.best);
  row("success (<10%)    ", r.spline.success_tight, r.model.success_tight);
  row("success (<15%)    ", r.spline.success_loose, r.model.success_loose);
  s += "\nimprovement (spline mean - model mean): " + pct(r.improvement) + "\n";
  s += "cases improved:                         " + pct(r.improved_fraction) + "\n";
  s += "spline std, median and success rates are supplemental.\n";
  return s;
}

std::string histogram_csv(const EvalReport& r) {
  const auto bins = static_cast<std::size_t>(std::lround(1.0 / kHistogramBin));
  std::vector<std::size_t> model(bins, 0), spline(bins, 0);
  auto bin_of = [&](double e) { return std::min(bins - 1, static_cast<std::size_t>(e / kHistogramBin)); };
  for (const auto& c : r.cases) {
    ++model[bin_of(c.model_error)];
    ++spline[bin_of(c.spline_error)];
  }
  std::string s = "bin_lo,bin_hi,model_count,spline_count\n";
  char buf[96];
  for (std::size_t b = 0; b < bins; ++b) {
    std::snprintf(buf, sizeof buf, "%.3f,%.3f,%zu,%zu\n", kHistogramBin * static_cast<double>(b),
                  kHistogramBin * static_cast<double>(b + 1), model[b], spline[b]);
    s += buf;
  }
  return s;
}

Json report_json(const EvalReport& r, bool with_cases) {
  Json j;
  j["preset"] = r.preset;
  j["seed"] = seed_to_string(r.seed);
  j["n_requested"] = r.n_requested;
  j["n_evaluated"] = r.cases.size();
  j["model"] = stats_json(r.model);
  j["spline"] = stats_json(r.spline);
  j["best_case_seed"] = seed_to_string(r.best_case_seed);
  j["improvement"] = r.improvement;
  j["improved_fraction"] = r.improved_fraction;
  j["failures"] = Json::array();
  for (const auto& f : r.failures) j["failures"].push_back({{"seed", seed_to_string(f.seed)}, {"message", f.message}});
  if (with_cases) {
    j["cases"] = Json::array();
    for (const auto& c : r.cases) j["cases"].push_back(case_json(c));
  }
  return j;
}

void write_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "report.json", report_json(r).dump(2) + "\n");
  write_file(dir / "report.txt", report_text(r));
  write_file(dir / "histogram.csv", histogram_csv(r));
  std::string lines;
  for (const auto& c : r.cases) lines += case_json(c).dump() + "\n";
  write_file(dir / "cases.jsonl", lines);
}

}  // namespace glopt
