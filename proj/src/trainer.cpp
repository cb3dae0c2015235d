#include "glopt/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "glopt/errors.hpp"
#include "glopt/json_io.hpp"
#include "glopt/param_io.hpp"
#include "glopt/rng.hpp"

namespace glopt {

using ad::Var;

void LossConfig::validate() const {
  if (!(std::isfinite(alpha_traj) && alpha_traj >= 0.0)) {
    throw std::invalid_argument("loss config field 'alpha_traj': must be >= 0");
  }
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config field '") + field + "': " + what);
  };
  require(epochs > 0, "epochs", "must be positive");
  require(batch_size > 0, "batch_size", "must be positive");
  require(std::isfinite(learning_rate) && learning_rate >= 0.0, "learning_rate", "must be >= 0");
  require(checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
  require(log_every > 0, "log_every", "must be positive");
  require(threads > 0, "threads", "must be positive");
  require(std::isfinite(clip_norm), "clip_norm", "must be finite");
  preset_by_name(preset);
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
Var<T> trajectory_loss(ad::Tape<T>& tape, double x0, std::span<const Var<T>> xs, double x_star,
                       const LossConfig& cfg) {
  if (xs.empty()) throw std::invalid_argument("trajectory_loss: empty trajectory");
  const T target = static_cast<T>(x_star);
  auto offset = [&](Var<T> x) { return ad::add_scalar(x, -target); };
  const Var<T> final_term = ad::square(offset(xs.back()));
  Var<T> prev_abs = tape.scalar(static_cast<T>(std::abs(x0 - x_star)));
  Var<T> path;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Var<T> e = offset(xs[t]);
    const Var<T> a = ad::abs(e);
    const Var<T> term = ad::add(ad::square(e), ad::square(ad::relu(ad::sub(a, prev_abs))));
    path = t == 0 ? term : ad::add(path, term);
    prev_abs = a;
  }
  return ad::add(final_term, ad::scale(path, static_cast<T>(cfg.alpha_traj)));
}

template Var<float> trajectory_loss(ad::Tape<float>&, double, std::span<const Var<float>>, double,
                                    const LossConfig&);
template Var<double> trajectory_loss(ad::Tape<double>&, double, std::span<const Var<double>>, double,
                                     const LossConfig&);

double trajectory_loss_value(std::span<const double> positions, double x_star, const LossConfig& cfg) {
  if (positions.size() < 2) throw std::invalid_argument("trajectory_loss: empty trajectory");
  ad::Tape<double> tape;
  std::vector<Var<double>> xs;
  for (std::size_t t = 1; t < positions.size(); ++t) xs.push_back(tape.scalar(positions[t]));
  return trajectory_loss<double>(tape, positions[0], xs, x_star, cfg).scalar();
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(const ad::ParamStore<float>& store, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& e : store) {
    m_.push_back(ad::Matrix<float>::Zero(e.value.rows(), e.value.cols()));
    v_.push_back(ad::Matrix<float>::Zero(e.value.rows(), e.value.cols()));
  }
}

double Adam::step(ad::ParamStore<float>& store, ad::Gradients<float> grads) {
  const double norm = std::sqrt(grads.squared_norm());
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) grads.scale(static_cast<float>(cfg_.clip_norm / norm));
  ++t_;
  const float b1 = static_cast<float>(cfg_.beta1);
  const float b2 = static_cast<float>(cfg_.beta2);
  const float c1 = static_cast<float>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
  const float c2 = static_cast<float>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
  const float lr = static_cast<float>(cfg_.learning_rate);
  const float eps = static_cast<float>(cfg_.eps);
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto g = grads.tensors[i].array();
    auto m = m_[i].array();
    auto v = v_[i].array();
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g.square();
    store[i].value.array() -= lr * (m / c1) / ((v / c2).sqrt() + eps);
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training

TrainingCase training_case(const TrainConfig& tcfg, const DifficultyPreset& preset, int epoch, int slot,
                           int* skipped) {
  const auto index = static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(tcfg.batch_size) +
                     static_cast<std::uint64_t>(slot);
  constexpr int kMaxRetries = 100;
  for (int retry = 0; retry <= kMaxRetries; ++retry) {
    const std::uint64_t run = retry == 0 ? tcfg.seed : derive_seed(tcfg.seed, "retry", static_cast<std::uint64_t>(retry));
    const std::uint64_t seed = case_seed(run, SeedDomain::kTraining, index);
    try {
      const Case c = make_case(preset, seed);
      return TrainingCase{seed, make_inputs(c.samples), c.function.argmin_true};
    } catch (const GenerationFailedError&) {
      if (skipped != nullptr) ++*skipped;
    }
  }
  throw GenerationFailedError(kMaxGenerationAttempts, case_seed(tcfg.seed, SeedDomain::kTraining, index));
}

CaseGradient case_gradient(const Model<float>& model, const TrainingCase& c, const LossConfig& lcfg) {
  ad::Tape<float> tape(&model.params());
  const auto g = model.run_graph(tape, c.inputs);
  const auto loss = trajectory_loss<float>(tape, c.inputs.x0, g.xs, c.x_star, lcfg);
  if (!std::isfinite(loss.scalar())) throw NumericError("non-finite loss");
  tape.backward(loss);
  CaseGradient out;
  out.loss = static_cast<double>(loss.scalar());
  out.error = std::abs(g.values.x_final - c.x_star);
  out.steps = g.values.steps.size();
  out.grads = model.params().zero_gradients();
  tape.accumulate_param_grads(out.grads);
  if (!std::isfinite(out.grads.squared_norm())) throw NumericError("non-finite gradient");
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<CaseGradient> batch_gradients(const Model<float>& model, const std::vector<TrainingCase>& cases,
                                          const LossConfig& lcfg, int threads) {
  std::vector<CaseGradient> out(cases.size());
  std::vector<std::exception_ptr> errors(cases.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t j = first; j < cases.size(); j += stride) {
      try {
        out[j] = case_gradient(model, cases[j], lcfg);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, threads));
  if (n_threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(work, k, n_threads);
    for (auto& th : pool) th.join();
  }
  for (std::size_t j = 0; j < cases.size(); ++j) {
    if (!errors[j]) continue;
    try {
      std::rethrow_exception(errors[j]);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (case seed " + std::to_string(cases[j].seed) + ")");
    }
  }
  return out;
}

}  // namespace

std::string train_log_csv(std::span<const TrainLogRecord> log) {
  std::string s = "epoch,loss,mean_error,mean_steps\n";
  for (const auto& r : log) {
    s += std::to_string(r.epoch) + "," + fmt(r.loss) + "," + fmt(r.mean_error) + "," + fmt(r.mean_steps) + "\n";
  }
  return s;
}

TrainResult train(const TrainConfig& tcfg, const LossConfig& lcfg, const ModelConfig& mcfg,
                  const std::optional<std::filesystem::path>& out_dir, const EpochCallback& on_epoch) {
  tcfg.validate();
  lcfg.validate();
  mcfg.validate();
  const DifficultyPreset preset = preset_by_name(tcfg.preset);
  if (preset.n_samples != mcfg.n_samples) {
    throw std::invalid_argument("model config n_samples " + std::to_string(mcfg.n_samples) +
                                " does not match preset n_samples " + std::to_string(preset.n_samples));
  }

  TrainResult result{Model<float>(mcfg, derive_seed(tcfg.seed, "init")), {}, 0};
  AdamConfig acfg;
  acfg.learning_rate = tcfg.learning_rate;
  acfg.clip_norm = tcfg.clip_norm;
  Adam adam(result.model.params(), acfg);

  std::ofstream log_csv, timing_csv;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    log_csv.open(*out_dir / "train_log.csv", std::ios::trunc);
    timing_csv.open(*out_dir / "timing.csv", std::ios::trunc);
    if (!log_csv || !timing_csv) throw std::runtime_error("cannot open training logs in '" + out_dir->string() + "'");
    log_csv << "epoch,loss,mean_error,mean_steps\n";
    timing_csv << "epoch,seconds\n";
  }

  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    std::vector<TrainingCase> cases;
    cases.reserve(static_cast<std::size_t>(tcfg.batch_size));
    for (int slot = 0; slot < tcfg.batch_size; ++slot) {
      cases.push_back(training_case(tcfg, preset, epoch - 1, slot, &result.skipped_generations));
    }

    std::vector<CaseGradient> per_case;
    try {
      per_case = batch_gradients(result.model, cases, lcfg, tcfg.threads);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
    }

    ad::Gradients<float> total = std::move(per_case[0].grads);
    double loss = per_case[0].loss, error = per_case[0].error, steps = static_cast<double>(per_case[0].steps);
    for (std::size_t j = 1; j < per_case.size(); ++j) {
      total.add(per_case[j].grads);
      loss += per_case[j].loss;
      error += per_case[j].error;
      steps += static_cast<double>(per_case[j].steps);
    }
    const double inv = 1.0 / static_cast<double>(per_case.size());
    total.scale(static_cast<float>(inv));
    try {
      adam.step(result.model.params(), std::move(total));
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
    }

    TrainLogRecord rec;
    rec.epoch = epoch;
    rec.loss = loss * inv;
    rec.mean_error = error * inv;
    rec.mean_steps = steps * inv;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (epoch % tcfg.log_every == 0 || epoch == tcfg.epochs) {
      result.log.push_back(rec);
      if (out_dir) {
        log_csv << epoch << "," << fmt(rec.loss) << "," << fmt(rec.mean_error) << "," << fmt(rec.mean_steps) << "\n";
        log_csv.flush();
        timing_csv << epoch << "," << fmt(rec.seconds) << "\n";
        timing_csv.flush();
      }
    }
    if (on_epoch) on_epoch(rec);
    if (out_dir && tcfg.checkpoint_every > 0 && epoch % tcfg.checkpoint_every == 0 && epoch != tcfg.epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%06d", epoch);
      save_checkpoint(result.model, *out_dir / "checkpoints" / name, tcfg, lcfg);
    }
  }
  if (out_dir) save_checkpoint(result.model, *out_dir / "final", tcfg, lcfg);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const Model<float>& model, const std::filesystem::path& dir,
                     const std::optional<TrainConfig>& tcfg, const std::optional<LossConfig>& lcfg) {
  std::filesystem::create_directories(dir);
  save_params(model.params(), dir / "params.bin");
  Json cfg;
  cfg["format"] = "glopt-checkpoint";
  cfg["version"] = 1;
  cfg["model"] = to_json(model.config());
  if (tcfg) cfg["train"] = to_json(*tcfg);
  if (lcfg) cfg["loss"] = to_json(*lcfg);
  write_text(dir / "config.json", cfg.dump(2) + "\n");

  const auto c = model.param_count();
  Json counts;
  counts["main_encoder"] = c.main_encoder;
  counts["iterator"] = c.iterator;
  counts["updater"] = c.updater;
  counts["total"] = c.total;
  counts["published"] = {{"main_encoder", kPublishedCounts.main_encoder},
                         {"iterator", kPublishedCounts.iterator},
                         {"updater", kPublishedCounts.updater},
                         {"total", kPublishedCounts.total}};
  auto delta = [](std::size_t ours, std::size_t theirs) {
    return static_cast<long long>(ours) - static_cast<long long>(theirs);
  };
  counts["delta"] = {{"main_encoder", delta(c.main_encoder, kPublishedCounts.main_encoder)},
                     {"iterator", delta(c.iterator, kPublishedCounts.iterator)},
                     {"updater", delta(c.updater, kPublishedCounts.updater)},
                     {"total", delta(c.total, kPublishedCounts.total)}};
  write_text(dir / "param_count.json", counts.dump(2) + "\n");
}

namespace {

Json read_checkpoint_config(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw CheckpointError("checkpoint '" + dir.string() + "' has no config.json");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptManifestError("checkpoint config.json is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object() || j.value("format", "") != "glopt-checkpoint") {
    throw CorruptManifestError("checkpoint config.json has an unknown format");
  }
  if (j.value("version", 0) != 1) {
    throw VersionMismatchError("checkpoint config version " + j.value("version", Json(0)).dump() + ", expected 1");
  }
  return j;
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const Json j = read_checkpoint_config(dir);
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(j.at("model"));
  } catch (const std::exception& e) {
    throw CorruptManifestError(std::string("checkpoint model config: ") + e.what());
  }
  Checkpoint ck{Model<float>(cfg), std::nullopt, std::nullopt};
  load_params(dir / "params.bin", ck.model.params());
  if (j.contains("train")) ck.train = train_config_from_json(j.at("train"));
  if (j.contains("loss")) ck.loss = loss_config_from_json(j.at("loss"));
  return ck;
}

Model<float> load_checkpoint_as(const std::filesystem::path& dir, const ModelConfig& cfg) {
  Model<float> model(cfg);
  load_params(dir / "params.bin", model.params());
  return model;
}

}  // namespace glopt
