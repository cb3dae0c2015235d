// glopt: case generation, training, evaluation, single-case demo,
// gradient checks and the parameter audit.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "glopt/errors.hpp"
#include "glopt/eval.hpp"
#include "glopt/json_io.hpp"
#include "glopt/rng.hpp"
#include "glopt/trainer.hpp"
#include "glopt/verify.hpp"

#ifndef GLOPT_VERSION
#define GLOPT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace glopt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

// Thrown for config values that pass the parser but fail validation.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

DifficultyPreset resolve_preset(const std::string& arg) {
  if (arg.ends_with(".json")) {
    std::ifstream in(arg);
    if (!in) throw UsageError("cannot read preset file '" + arg + "'");
    return preset_from_json(Json::parse(in));
  }
  return preset_by_name(arg);
}

SeedDomain resolve_domain(const std::string& d) {
  if (d == "train") return SeedDomain::kTraining;
  if (d == "eval") return SeedDomain::kEvaluation;
  throw UsageError("--domain must be 'train' or 'eval'");
}

// Accepts a checkpoint directory or a training run directory with final/.
fs::path checkpoint_dir(const fs::path& p) {
  if (fs::exists(p / "final" / "params.bin")) return p / "final";
  return p;
}

/// Written to the output directory before any long computation starts.
struct Manifest {
  std::string subcommand;
  Json config = Json::object();
  Json seeds = Json::object();
  Json outputs = Json::object();

  void write(const CLI::App& app, const fs::path& dir) const {
    fs::create_directories(dir);
    Json j;
    j["subcommand"] = subcommand;
    j["tool_version"] = GLOPT_VERSION;
    j["config"] = config;
    j["seeds"] = seeds;
    j["outputs"] = outputs;
    // The flag file reproduces the run via --config.
    j["flags_file"] = "resolved_flags.toml";
    write_text(dir / "manifest.json", j.dump(2) + "\n");
    write_text(dir / "resolved_flags.toml", "[" + subcommand + "]\n" + app.config_to_str(true, false));
  }
};

struct ModelFlags {
  ModelConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--d-model", cfg.d_model, "Feature width of the encoders")->capture_default_str();
    app->add_option("--d-edv", cfg.d_edv, "Encoding width")->capture_default_str();
    app->add_option("--iter-hidden", cfg.iter_hidden, "Iterator hidden width")->capture_default_str();
    app->add_option("--t-max", cfg.t_max, "Maximum Iterator steps")->capture_default_str();
    app->add_option("--stop-tau", cfg.stop_tau, "Stop when the variance of the last three steps is below this")
        ->capture_default_str();
    app->add_option("--fixed-unroll", cfg.fixed_unroll, "Run exactly this many steps (0: stop test active)")
        ->capture_default_str();
  }
};

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
  std::string preset = "nightmare";
  std::uint64_t seed = 1;
  std::size_t count = 10;
  std::string domain = "eval";
  fs::path out = "runs/gen";
};

int run_gen(const CLI::App& app, const GenArgs& a) {
  const auto preset = resolve_preset(a.preset);
  const auto domain = resolve_domain(a.domain);
  Manifest m{"gen"};
  m.config = {{"preset", to_json(preset)}, {"count", a.count}, {"domain", a.domain}};
  m.seeds = {{"run_seed", seed_to_string(a.seed)}};
  m.outputs = {{"cases", (a.out / "case_NNNNNN.json").string()}};
  m.write(app, a.out);
  std::size_t written = 0;
  for (std::size_t i = 0; i < a.count; ++i) {
    const auto s = case_seed(a.seed, domain, i);
    try {
      const Case c = make_case(preset, s);
      char name[32];
      std::snprintf(name, sizeof name, "case_%06zu.json", i);
      write_text(a.out / name, to_json(c).dump(2) + "\n");
      ++written;
    } catch (const GenerationFailedError& e) {
      std::cerr << "case " << i << ": " << e.what() << "\n";
    }
  }
  std::cout << "wrote " << written << " of " << a.count << " cases to " << a.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  TrainConfig train;
  LossConfig loss;
  ModelFlags model;
  fs::path out = "runs/train";
  int progress_every = 100;
};

int run_train(const CLI::App& app, TrainArgs& a) {
  a.model.cfg.n_samples = preset_by_name(a.train.preset).n_samples;
  try {
    a.train.validate();
    a.loss.validate();
    a.model.cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  Manifest m{"train"};
  m.config = {{"train", to_json(a.train)}, {"loss", to_json(a.loss)}, {"model", to_json(a.model.cfg)}};
  m.seeds = {{"run_seed", seed_to_string(a.train.seed)}, {"init_seed", seed_to_string(derive_seed(a.train.seed, "init"))}};
  m.outputs = {{"log", (a.out / "train_log.csv").string()},
               {"timing", (a.out / "timing.csv").string()},
               {"checkpoints", (a.out / "checkpoints").string()},
               {"final", (a.out / "final").string()}};
  m.write(app, a.out);
  const auto result = train(a.train, a.loss, a.model.cfg, a.out, [&](const TrainLogRecord& r) {
    if (a.progress_every > 0 && (r.epoch % a.progress_every == 0 || r.epoch == a.train.epochs)) {
      std::cout << "epoch " << r.epoch << "  loss " << fmt("%.5f", r.loss) << "  mean_error "
                << fmt("%.4f", r.mean_error) << "  mean_steps " << fmt("%.2f", r.mean_steps) << "  "
                << fmt("%.1f", r.seconds) << " s" << std::endl;
    }
  });
  if (result.skipped_generations > 0) {
    std::cout << result.skipped_generations << " generation failures replaced by retry seeds\n";
  }
  std::cout << "final checkpoint: " << (a.out / "final").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string preset = "nightmare";
  std::size_t n_cases = 50;
  std::uint64_t seed = 1;
  int threads = 1;
  fs::path out = "runs/eval";
};

int run_eval(const CLI::App& app, const EvalArgs& a) {
  const auto preset = resolve_preset(a.preset);
  if (a.n_cases == 0) throw UsageError("--n-cases must be >= 1");
  if (a.threads < 1) throw UsageError("--threads must be >= 1");
  const auto ck_dir = checkpoint_dir(a.checkpoint);
  Manifest m{"eval"};
  m.config = {{"checkpoint", ck_dir.string()}, {"preset", to_json(preset)}, {"n_cases", a.n_cases},
              {"threads", a.threads}};
  m.seeds = {{"eval_seed", seed_to_string(a.seed)}};
  m.outputs = {{"report_json", (a.out / "report.json").string()},
               {"report_txt", (a.out / "report.txt").string()},
               {"histogram", (a.out / "histogram.csv").string()},
               {"cases", (a.out / "cases.jsonl").string()}};
  m.write(app, a.out);
  const auto ck = load_checkpoint(ck_dir);
  const auto report = evaluate(ck.model, preset, a.n_cases, a.seed, a.threads);
  write_report(report, a.out);
  std::cout << report_text(report);
  for (const auto& f : report.failures) std::cerr << "skipped case seed " << f.seed << ": " << f.message << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// demo

struct DemoArgs {
  std::uint64_t seed = 1;
  std::uint64_t index = 0;
  std::string preset = "nightmare";
  std::string checkpoint = "none";
  std::string domain = "eval";
  bool curve = false;
  fs::path out = "runs/demo";
};

int run_demo(const CLI::App& app, const DemoArgs& a) {
  const auto preset = resolve_preset(a.preset);
  const auto s = case_seed(a.seed, resolve_domain(a.domain), a.index);
  const bool spline_only = a.checkpoint == "none";
  Manifest m{"demo"};
  m.config = {{"preset", to_json(preset)}, {"checkpoint", a.checkpoint}, {"domain", a.domain}, {"index", a.index}};
  m.seeds = {{"run_seed", seed_to_string(a.seed)}, {"case_seed", seed_to_string(s)}};
  m.outputs = {{"case", (a.out / "case.json").string()}};
  if (!spline_only) m.outputs["trajectory"] = (a.out / "trajectory.jsonl").string();
  if (a.curve) {
    m.outputs["curve"] = (a.out / "curve.csv").string();
    m.outputs["samples"] = (a.out / "samples.csv").string();
  }
  m.write(app, a.out);

  const Case c = make_case(preset, s);
  write_text(a.out / "case.json", to_json(c).dump(2) + "\n");
  const ModelInputs in = make_inputs(c.samples);
  const double x_star = c.function.argmin_true;
  std::cout << "case seed " << s << " (preset " << preset.name << ")\n";
  std::cout << "x* = " << fmt("%.6f", x_star) << "\n";
  std::cout << "x0 = " << fmt("%.6f", in.x0) << "  (spline argmin)\n";
  std::cout << "spline error = " << fmt("%.6f", std::abs(in.x0 - x_star)) << "\n";

  std::optional<Trajectory> traj;
  if (!spline_only) {
    const auto ck = load_checkpoint(checkpoint_dir(a.checkpoint));
    if (ck.model.config().n_samples != preset.n_samples) {
      throw UsageError("checkpoint expects " + std::to_string(ck.model.config().n_samples) + " samples, preset has " +
                       std::to_string(preset.n_samples));
    }
    traj = ck.model.run(in);
    std::string lines;
    for (const auto& step : to_json(*traj)["steps"]) {
      std::cout << step.dump() << "\n";
      lines += step.dump() + "\n";
    }
    write_text(a.out / "trajectory.jsonl", lines);
    std::cout << "x_T = " << fmt("%.6f", traj->x_final) << "  after " << traj->steps.size() << " steps ("
              << to_string(traj->stop_reason) << ")\n";
    std::cout << "model error = " << fmt("%.6f", std::abs(traj->x_final - x_star)) << "\n";
  }

  if (a.curve) {
    const SplineFit fit = fit_interpolating_spline(c.samples.xs, c.samples.ys);
    std::string csv = "x,f_true,f_spline\n";
    for (std::size_t i = 0; i <= kOracleGrid; ++i) {
      const double x = static_cast<double>(i) / static_cast<double>(kOracleGrid);
      csv += fmt("%.6f", x) + "," + fmt("%.9g", c.function(x)) + "," + fmt("%.9g", spline_eval(fit, x)) + "\n";
    }
    write_text(a.out / "curve.csv", csv);
    std::string samples = "x,y\n";
    for (std::size_t i = 0; i < c.samples.xs.size(); ++i) {
      samples += fmt("%.9g", c.samples.xs[i]) + "," + fmt("%.9g", c.samples.ys[i]) + "\n";
    }
    write_text(a.out / "samples.csv", samples);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  std::size_t full_size_samples = 4;
  fs::path out = "runs/gradcheck";
};

int run_gradcheck(const CLI::App& app, const GradcheckArgs& a) {
  Manifest m{"gradcheck"};
  m.config = {{"eps", 1e-6},
              {"primitive_threshold", kPrimitiveGradTol},
              {"trajectory_threshold", kTrajectoryGradTol},
              {"toy_model", to_json(toy_model_config())},
              {"full_size_samples_per_tensor", a.full_size_samples}};
  m.outputs = {{"results", (a.out / "gradcheck.json").string()}};
  m.write(app, a.out);

  auto suites = primitive_gradcheck_suites();
  suites.push_back(trajectory_gradcheck(toy_model_config()));
  if (a.full_size_samples > 0) {
    ModelConfig full;
    full.fixed_unroll = 2;
    suites.push_back(trajectory_gradcheck(full, a.full_size_samples));
  }
  bool ok = true;
  Json results = Json::array();
  std::printf("%-58s %12s %10s %8s\n", "suite", "max rel err", "threshold", "checked");
  for (const auto& s : suites) {
    ok = ok && s.passed();
    std::printf("%-58s %12.3e %10.0e %8zu  %s\n", s.name.c_str(), s.max_rel_error, s.threshold, s.checked,
                s.passed() ? "ok" : "FAIL");
    results.push_back({{"suite", s.name},
                       {"max_rel_error", s.max_rel_error},
                       {"threshold", s.threshold},
                       {"checked", s.checked},
                       {"worst", s.worst},
                       {"passed", s.passed()}});
  }
  write_text(a.out / "gradcheck.json", results.dump(2) + "\n");
  return ok ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------
// params

struct ParamsArgs {
  ModelFlags model;
  std::string checkpoint;
  fs::path out = "runs/params";
};

int run_params(const CLI::App& app, ParamsArgs& a) {
  ModelConfig cfg = a.model.cfg;
  if (!a.checkpoint.empty()) {
    std::ifstream in(checkpoint_dir(a.checkpoint) / "config.json");
    if (!in) throw CheckpointError("no config.json under '" + a.checkpoint + "'");
    cfg = model_config_from_json(Json::parse(in).at("model"));
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  Manifest m{"params"};
  m.config = {{"model", to_json(cfg)}};
  m.outputs = {{"counts", (a.out / "param_count.json").string()}};
  m.write(app, a.out);

  const Model<float> model(cfg);
  const auto c = model.param_count();
  const auto& p = kPublishedCounts;
  auto row = [](const char* name, std::size_t ours, std::size_t published) {
    std::printf("%-14s %12zu %12zu %+12lld\n", name, ours, published,
                static_cast<long long>(ours) - static_cast<long long>(published));
  };
  std::printf("%-14s %12s %12s %12s\n", "component", "constructed", "published", "delta");
  row("MainEncoder", c.main_encoder, p.main_encoder);
  row("Iterator", c.iterator, p.iterator);
  row("Updater", c.updater, p.updater);
  row("total", c.total, p.total);
  Json j;
  j["model"] = to_json(cfg);
  j["constructed"] = {{"main_encoder", c.main_encoder}, {"iterator", c.iterator}, {"updater", c.updater},
                      {"total", c.total}};
  j["published"] = {{"main_encoder", p.main_encoder}, {"iterator", p.iterator}, {"updater", p.updater},
                    {"total", p.total}};
  j["tensors"] = Json::array();
  for (const auto& e : model.params()) j["tensors"].push_back({{"name", e.name}, {"shape", {e.value.rows(), e.value.cols()}}});
  write_text(a.out / "param_count.json", j.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned global optimizer for noisy 1D functions", "glopt"};
  app.set_version_flag("--version", GLOPT_VERSION);
  app.set_config("--config", "", "TOML file of flag values; [subcommand] sections, flags override it");
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Write case files (function, samples, labels) for a preset");
  g->add_option("--preset", gen.preset, "Preset name or JSON preset file")->capture_default_str();
  g->add_option("--seed", gen.seed, "Run seed")->capture_default_str();
  g->add_option("--count", gen.count, "Number of cases")->capture_default_str();
  g->add_option("--domain", gen.domain, "Seed namespace: eval or train")->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train on fresh cases; writes logs and checkpoints");
  t->add_option("--epochs", tr.train.epochs, "Optimizer steps, one fresh batch each")->capture_default_str();
  t->add_option("--batch", tr.train.batch_size, "Cases per epoch")->capture_default_str();
  t->add_option("--lr", tr.train.learning_rate, "Adam learning rate")->capture_default_str();
  t->add_option("--preset", tr.train.preset, "Built-in preset name")->capture_default_str();
  t->add_option("--seed", tr.train.seed, "Run seed")->capture_default_str();
  t->add_option("--checkpoint-every", tr.train.checkpoint_every, "Epochs between checkpoints (0: final only)")
      ->capture_default_str();
  t->add_option("--log-every", tr.train.log_every, "Epochs between log rows")->capture_default_str();
  t->add_option("--threads", tr.train.threads, "Worker threads for per-case gradients")->capture_default_str();
  t->add_option("--clip-norm", tr.train.clip_norm, "Global gradient-norm clip (<= 0 disables)")->capture_default_str();
  t->add_option("--alpha", tr.loss.alpha_traj, "Trajectory term weight")->capture_default_str();
  t->add_option("--progress-every", tr.progress_every, "Epochs between progress lines (0: silent)")
      ->capture_default_str();
  t->add_option("--out", tr.out, "Run directory")->capture_default_str();
  tr.model.add(t);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint against the spline baseline on held-out cases");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint or training run directory")->required();
  e->add_option("--preset", ev.preset, "Preset name or JSON preset file")->capture_default_str();
  e->add_option("--n-cases", ev.n_cases, "Number of cases")->capture_default_str();
  e->add_option("--seed", ev.seed, "Evaluation seed")->capture_default_str();
  e->add_option("--threads", ev.threads, "Worker threads")->capture_default_str();
  e->add_option("--out", ev.out, "Report directory")->capture_default_str();

  DemoArgs de;
  auto* d = app.add_subcommand("demo", "Run one case and print its trajectory");
  d->add_option("--seed", de.seed, "Run seed")->capture_default_str();
  d->add_option("--index", de.index, "Case index within the seed's namespace")->capture_default_str();
  d->add_option("--preset", de.preset, "Preset name or JSON preset file")->capture_default_str();
  d->add_option("--checkpoint", de.checkpoint, "Checkpoint directory, or 'none' for the spline only")
      ->capture_default_str();
  d->add_option("--domain", de.domain, "Seed namespace: eval or train")->capture_default_str();
  d->add_flag("--curve", de.curve, "Also write curve.csv (dense f and spline) and samples.csv");
  d->add_option("--out", de.out, "Output directory")->capture_default_str();

  GradcheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Check every gradient against central differences");
  c->add_option("--full-size-samples", gc.full_size_samples,
                "Entries per tensor for the full-size trajectory check (0 skips it)")
      ->capture_default_str();
  c->add_option("--out", gc.out, "Output directory")->capture_default_str();

  ParamsArgs pa;
  auto* p = app.add_subcommand("params", "Parameter counts per component vs published figures");
  pa.model.add(p);
  p->add_option("--checkpoint", pa.checkpoint, "Read the model config from a checkpoint");
  p->add_option("--out", pa.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForVersion& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    std::cerr << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*g) return run_gen(*g, gen);
    if (*t) return run_train(*t, tr);
    if (*e) return run_eval(*e, ev);
    if (*d) return run_demo(*d, de);
    if (*c) return run_gradcheck(*c, gc);
    if (*p) return run_params(*p, pa);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& err) {
    // Preset and config parsing report bad values this way.
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
