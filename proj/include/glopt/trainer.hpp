#pragma once

// Trajectory loss, Adam, the fresh-data training loop and checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glopt/autodiff.hpp"
#include "glopt/funcgen.hpp"
#include "glopt/model.hpp"

namespace glopt {

struct LossConfig {
  double alpha_traj = 0.5;

  void validate() const;
};

/// |x_T - x*|^2 + alpha * sum_{t=1..T} [ (x_t - x*)^2 + relu(|x_t - x*| - |x_{t-1} - x*|)^2 ]
/// over x_0 (a constant) and the tape positions x_1..x_T.
/// Throws std::invalid_argument for an empty trajectory.
template <typename T>
ad::Var<T> trajectory_loss(ad::Tape<T>& tape, double x0, std::span<const ad::Var<T>> xs, double x_star,
                           const LossConfig& cfg);

/// Same loss on plain values; `positions` is x_0..x_T.
double trajectory_loss_value(std::span<const double> positions, double x_star, const LossConfig& cfg);

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global-norm clip threshold; <= 0 disables clipping.
  double clip_norm = 5.0;
};

class Adam {
 public:
  Adam(const ad::ParamStore<float>& store, AdamConfig cfg);

  /// Clips (if enabled) and applies one update. Returns the pre-clip global
  /// gradient norm.
  double step(ad::ParamStore<float>& store, ad::Gradients<float> grads);

  std::uint64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<ad::Matrix<float>> m_;
  std::vector<ad::Matrix<float>> v_;
  std::uint64_t t_ = 0;
};

struct TrainConfig {
  int epochs = 10000;
  int batch_size = 16;
  double learning_rate = 2e-4;
  std::string preset = "nightmare";
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  int log_every = 1;
  int threads = 1;
  double clip_norm = 5.0;  // <= 0 disables

  void validate() const;
};

struct TrainLogRecord {
  int epoch = 0;
  double loss = 0.0;
  double mean_error = 0.0;
  double mean_steps = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Model<float> model;
  std::vector<TrainLogRecord> log;
  int skipped_generations = 0;
};

/// One training sample, fully determined by its seed.
struct TrainingCase {
  std::uint64_t seed = 0;
  ModelInputs inputs;
  double x_star = 0.0;
};

/// Case for batch slot `slot` of epoch `epoch`. A seed whose generation
/// fails is replaced by a deterministic retry seed.
TrainingCase training_case(const TrainConfig& tcfg, const DifficultyPreset& preset, int epoch, int slot,
                           int* skipped = nullptr);

/// Loss and parameter gradient of one case (float, fresh tape).
struct CaseGradient {
  double loss = 0.0;
  double error = 0.0;
  std::size_t steps = 0;
  ad::Gradients<float> grads;
};
CaseGradient case_gradient(const Model<float>& model, const TrainingCase& c, const LossConfig& lcfg);

using EpochCallback = std::function<void(const TrainLogRecord&)>;

/// Trains from the seed-derived initialization. With `out_dir`, writes
/// train_log.csv (epoch,loss,mean_error,mean_steps), timing.csv
/// (epoch,seconds), periodic checkpoints under checkpoints/epoch_NNNNNN and
/// the final checkpoint under final/. Deterministic for any thread count:
/// per-case gradients are reduced in slot order.
TrainResult train(const TrainConfig& tcfg, const LossConfig& lcfg, const ModelConfig& mcfg,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const EpochCallback& on_epoch = nullptr);

/// Checkpoint directory: params.bin, config.json, param_count.json.
void save_checkpoint(const Model<float>& model, const std::filesystem::path& dir,
                     const std::optional<TrainConfig>& tcfg = std::nullopt,
                     const std::optional<LossConfig>& lcfg = std::nullopt);

struct Checkpoint {
  Model<float> model;
  std::optional<TrainConfig> train;
  std::optional<LossConfig> loss;
};

/// Rebuilds the model from config.json and loads params.bin into it.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Loads params.bin of `dir` into a model built from `cfg` instead of the
/// stored config; shape differences raise ShapeMismatchError.
Model<float> load_checkpoint_as(const std::filesystem::path& dir, const ModelConfig& cfg);

std::string train_log_csv(std::span<const TrainLogRecord> log);

}  // namespace glopt
