#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <numeric>
#include <sstream>

#include <unistd.h>

#include "glopt/errors.hpp"
#include "glopt/json_io.hpp"
#include "glopt/param_io.hpp"
#include "glopt/rng.hpp"
#include "glopt/trainer.hpp"
#include "glopt/verify.hpp"
#include "../support/rigs.hpp"

namespace glopt {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("glopt_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Direct transcription of the loss for the oracle: x holds x_0..x_T.
double loss_oracle(const std::vector<double>& x, double xs, double alpha) {
  double path = 0.0;
  for (std::size_t t = 1; t < x.size(); ++t) {
    const double now = std::abs(x[t] - xs), before = std::abs(x[t - 1] - xs);
    path += (x[t] - xs) * (x[t] - xs) + std::pow(std::max(0.0, now - before), 2);
  }
  return std::pow(x.back() - xs, 2) + alpha * path;
}

TEST(Loss, HandExamples) {
  const LossConfig cfg{0.5};
  // x_0 equals x* so the first step's penalty baseline is zero distance.
  EXPECT_NEAR(trajectory_loss_value(std::vector<double>{0.2, 0.5, 0.3}, 0.2, cfg),
              0.1 * 0.1 + 0.5 * (0.3 * 0.3 + 0.3 * 0.3 + 0.1 * 0.1), 1e-15);
}

TEST(Loss, WorkedExamples) {
  // Two-position trajectories, x_0 the first entry: only x_1 is a step.
  const LossConfig cfg{0.5};
  EXPECT_NEAR(trajectory_loss_value(std::vector<double>{0.5, 0.3}, 0.2, cfg), 0.015, 1e-15);
  EXPECT_NEAR(trajectory_loss_value(std::vector<double>{0.3, 0.5}, 0.2, cfg), 0.155, 1e-15);
}

TEST(Loss, ZeroAtTarget) {
  EXPECT_EQ(trajectory_loss_value(std::vector<double>{0.4, 0.4, 0.4, 0.4}, 0.4, LossConfig{}), 0.0);
}

TEST(Loss, EmptyTrajectoryRejected) {
  EXPECT_THROW(trajectory_loss_value(std::vector<double>{0.3}, 0.2, LossConfig{}), std::invalid_argument);
  ad::Tape<double> t;
  EXPECT_THROW(trajectory_loss<double>(t, 0.3, {}, 0.2, LossConfig{}), std::invalid_argument);
}

TEST(Loss, MatchesOracleAndIsNonNegative) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> x(1 + gen() % 40);
    for (auto& v : x) v = u(gen);
    if (x.size() < 2) x.push_back(u(gen));
    const double xs = u(gen), alpha = 2.0 * u(gen);
    const double l = trajectory_loss_value(x, xs, LossConfig{alpha});
    EXPECT_GE(l, 0.0);
    EXPECT_NEAR(l, loss_oracle(x, xs, alpha), 1e-12);
  }
}

TEST(Loss, ZeroOnlyWhenEveryStepIsOnTarget) {
  EXPECT_GT(trajectory_loss_value(std::vector<double>{0.9, 0.4, 0.41, 0.4}, 0.4, LossConfig{}), 0.0);
  EXPECT_EQ(trajectory_loss_value(std::vector<double>{0.9, 0.4, 0.4}, 0.4, LossConfig{}), 0.0);
}

TEST(Loss, MonotoneProgressHasNoPenalty) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double xs = u(gen);
    std::vector<double> x{u(gen)};
    for (int t = 0; t < 10; ++t) {
      const double shrink = u(gen);
      const double side = gen() % 2 == 0 ? 1.0 : -1.0;
      x.push_back(std::clamp(xs + side * shrink * std::abs(x.back() - xs), 0.0, 1.0));
    }
    double squares = 0.0;
    for (std::size_t t = 1; t < x.size(); ++t) squares += (x[t] - xs) * (x[t] - xs);
    const double expected = (x.back() - xs) * (x.back() - xs) + 0.5 * squares;
    EXPECT_NEAR(trajectory_loss_value(x, xs, LossConfig{0.5}), expected, 1e-14);
  }
}

TEST(Loss, TapeAgreesWithValueForm) {
  ad::Tape<double> t;
  const std::vector<double> x{0.7, 0.5, 0.65, 0.3, 0.35};
  std::vector<ad::Var<double>> vs;
  for (std::size_t i = 1; i < x.size(); ++i) vs.push_back(t.scalar(x[i]));
  EXPECT_NEAR(trajectory_loss<double>(t, x[0], vs, 0.33, LossConfig{}).scalar(),
              loss_oracle(x, 0.33, 0.5), 1e-15);
}

TEST(Loss, GradientThroughTwoStepUnroll) {
  const auto r = trajectory_gradcheck(toy_model_config());
  EXPECT_LT(r.max_rel_error, kTrajectoryGradTol) << r.worst;
  EXPECT_GT(r.checked, 10000u);
}

TEST(Adam, FirstStepOnSquareMovesTowardZero) {
  for (double lr : {1e-4, 2e-4, 1e-2, 0.1, 0.5}) {
    for (float w0 : {1.5f, -0.7f, 0.2f}) {
      // The first Adam step has length lr, so it overshoots past -w0 once lr >= 2|w0|.
      if (lr >= 2.0 * std::abs(w0)) continue;
      ad::ParamStore<float> store;
      store.add("w", 1, 1);
      store[0].value(0, 0) = w0;
      AdamConfig cfg;
      cfg.learning_rate = lr;
      Adam adam(store, cfg);
      const auto g = ad::analytic_gradient<float>(store, [](ad::Tape<float>& t) { return ad::square(t.param(0)); });
      const double norm = adam.step(store, g);
      EXPECT_NEAR(norm, 2.0 * std::abs(w0), 1e-6);
      const float w1 = store[0].value(0, 0);
      EXPECT_LT(std::abs(w1), std::abs(w0));
      // Bias-corrected first step has magnitude lr.
      EXPECT_NEAR(std::abs(w1 - w0), lr, 1e-5 * std::max(1.0, lr * 10));
    }
  }
}

TEST(Adam, ConvergesOnSquare) {
  ad::ParamStore<float> store;
  store.add("w", 1, 1);
  store[0].value(0, 0) = 1.0f;
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  Adam adam(store, cfg);
  for (int i = 0; i < 500; ++i) {
    adam.step(store, ad::analytic_gradient<float>(store, [](ad::Tape<float>& t) { return ad::square(t.param(0)); }));
  }
  EXPECT_LT(std::abs(store[0].value(0, 0)), 0.05f);
  EXPECT_EQ(adam.steps(), 500u);
}

TEST(Adam, ClippingScalesLargeGradients) {
  ad::ParamStore<float> a, b;
  for (auto* s : {&a, &b}) s->add("w", 1, 2);
  AdamConfig clipped;
  clipped.clip_norm = 1.0;
  AdamConfig free = clipped;
  free.clip_norm = 0.0;
  Adam ca(a, clipped), cb(b, free);
  auto grads = a.zero_gradients();
  grads.tensors[0] << 30.0f, 40.0f;
  EXPECT_NEAR(ca.step(a, grads), 50.0, 1e-9);
  cb.step(b, grads);
  // Second step with a small gradient: the clipped run has smaller moments,
  // so the small gradient moves it further.
  grads.tensors[0] << 0.3f, 0.4f;
  const auto before_a = a[0].value, before_b = b[0].value;
  ca.step(a, grads);
  cb.step(b, grads);
  EXPECT_GT(std::abs(a[0].value(0, 0) - before_a(0, 0)), std::abs(b[0].value(0, 0) - before_b(0, 0)));
}

TEST(Adam, NonFiniteGradientRejected) {
  ad::ParamStore<float> s;
  s.add("w", 1, 1);
  Adam adam(s, AdamConfig{});
  auto g = s.zero_gradients();
  g.tensors[0](0, 0) = std::nanf("");
  EXPECT_THROW(adam.step(s, g), NumericError);
}

TrainConfig tiny_train(int epochs = 2, int batch = 2) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch;
  t.seed = 1;
  return t;
}

TEST(Train, ZeroLearningRateLeavesParamsByteIdentical) {
  auto t = tiny_train(1, 2);
  t.learning_rate = 0.0;
  const ModelConfig m;
  const auto r = train(t, LossConfig{}, m);
  const Model<float> fresh(m, derive_seed(t.seed, "init"));
  EXPECT_EQ(serialize_params(r.model.params()), serialize_params(fresh.params()));
}

TEST(Train, OneStepChangesParams) {
  const ModelConfig m;
  const auto r = train(tiny_train(1, 2), LossConfig{}, m);
  const Model<float> fresh(m, derive_seed(1, "init"));
  EXPECT_NE(serialize_params(r.model.params()), serialize_params(fresh.params()));
}

TEST(Train, RepeatedRunsAreByteIdentical) {
  const auto a = scratch_dir("det_a"), b = scratch_dir("det_b"), c = scratch_dir("det_c");
  auto t = tiny_train(2, 2);
  train(t, LossConfig{}, ModelConfig{}, a);
  train(t, LossConfig{}, ModelConfig{}, b);
  t.threads = 2;
  train(t, LossConfig{}, ModelConfig{}, c);
  EXPECT_EQ(slurp(a / "train_log.csv"), slurp(b / "train_log.csv"));
  EXPECT_EQ(slurp(a / "final" / "params.bin"), slurp(b / "final" / "params.bin"));
  EXPECT_EQ(slurp(a / "train_log.csv"), slurp(c / "train_log.csv"));
  EXPECT_EQ(slurp(a / "final" / "params.bin"), slurp(c / "final" / "params.bin"));
  EXPECT_TRUE(fs::exists(a / "timing.csv"));
  EXPECT_EQ(slurp(a / "train_log.csv").substr(0, 34), "epoch,loss,mean_error,mean_steps\n1");
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST(Train, PeriodicCheckpoints) {
  const auto d = scratch_dir("ckpt_cadence");
  auto t = tiny_train(3, 1);
  t.checkpoint_every = 1;
  train(t, LossConfig{}, ModelConfig{}, d);
  EXPECT_TRUE(fs::exists(d / "checkpoints" / "epoch_000001" / "params.bin"));
  EXPECT_TRUE(fs::exists(d / "checkpoints" / "epoch_000002" / "config.json"));
  EXPECT_TRUE(fs::exists(d / "final" / "param_count.json"));
  fs::remove_all(d);
}

TEST(Train, DivergenceReportsEpochAndSeed) {
  auto t = tiny_train(6, 1);
  t.learning_rate = 1e30;
  t.clip_norm = 0.0;
  try {
    train(t, LossConfig{}, ModelConfig{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
    EXPECT_NE(msg.find("seed"), std::string::npos) << msg;
  }
}

TEST(Train, RejectsPresetModelMismatch) {
  auto t = tiny_train();
  ModelConfig m;
  m.n_samples = 20;
  EXPECT_THROW(train(t, LossConfig{}, m), std::invalid_argument);
  t.batch_size = 0;
  EXPECT_THROW(train(t, LossConfig{}, ModelConfig{}), std::invalid_argument);
}

TEST(Train, CasesComeFromTrainingNamespace) {
  const auto t = tiny_train();
  const auto preset = preset_by_name("nightmare");
  const auto a = training_case(t, preset, 3, 1), b = training_case(t, preset, 3, 1);
  EXPECT_EQ(a.seed, b.seed);
  EXPECT_EQ(a.inputs.ys, b.inputs.ys);
  EXPECT_EQ(a.seed >> 63, 0u);
  EXPECT_NE(a.seed, training_case(t, preset, 3, 0).seed);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST(Train, EarlyLossTrendsDown) {
  auto t = tiny_train(200, 16);
  const auto r = train(t, LossConfig{}, ModelConfig{});
  ASSERT_EQ(r.log.size(), 200u);
  std::vector<double> smooth, epochs;
  for (std::size_t i = 49; i < r.log.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = i - 49; k <= i; ++k) s += r.log[k].loss;
    smooth.push_back(s / 50.0);
    epochs.push_back(static_cast<double>(r.log[i].epoch));
  }
  EXPECT_LT(spearman(epochs, smooth), 0.0);
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, RoundTripReproducesTrajectories) {
  const auto d = scratch_dir("roundtrip");
  Model<float> m(ModelConfig{}, 42);
  TrainConfig t = tiny_train();
  t.seed = 0xFFFFFFFFFFFFFFF1ULL;
  save_checkpoint(m, d, t, LossConfig{0.25});
  const auto ck = load_checkpoint(d);
  EXPECT_EQ(ck.model.config(), m.config());
  ASSERT_TRUE(ck.train && ck.loss);
  EXPECT_EQ(ck.train->seed, t.seed);
  EXPECT_EQ(ck.loss->alpha_traj, 0.25);
  EXPECT_EQ(serialize_params(ck.model.params()), serialize_params(m.params()));
  for (std::uint64_t s : {1u, 2u, 3u}) {
    const auto in = testing::nightmare_inputs(s);
    const auto a = m.run(in), b = ck.model.run(in);
    ASSERT_EQ(a.steps.size(), b.steps.size());
    for (std::size_t k = 0; k < a.steps.size(); ++k) {
      EXPECT_EQ(a.steps[k].x_next, b.steps[k].x_next);
      EXPECT_EQ(a.steps[k].s, b.steps[k].s);
      EXPECT_EQ(a.steps[k].d, b.steps[k].d);
    }
  }
  fs::remove_all(d);
}

TEST(Checkpoint, TruncatedFileIsCorruptAndLoadsNothing) {
  const Model<float> m(ModelConfig{}, 42);
  auto bytes = serialize_params(m.params());
  Model<float> target(ModelConfig{}, 43);
  const auto before = serialize_params(target.params());
  for (std::size_t cut : {std::size_t{4}, std::size_t{60}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    EXPECT_THROW(deserialize_params(part, target.params()), CorruptManifestError) << cut;
    EXPECT_EQ(serialize_params(target.params()), before);
  }
}

TEST(Checkpoint, DistinctErrorsPerFailureMode) {
  const Model<float> m(ModelConfig{}, 42);
  auto bytes = serialize_params(m.params());
  Model<float> target(ModelConfig{}, 43);

  auto version = bytes;
  version[8] = 9;
  EXPECT_THROW(deserialize_params(version, target.params()), VersionMismatchError);

  auto manifest = bytes;
  manifest[30] ^= 0x01;
  EXPECT_THROW(deserialize_params(manifest, target.params()), CorruptManifestError);

  auto data = bytes;
  data[bytes.size() - 20] ^= 0x01;
  EXPECT_THROW(deserialize_params(data, target.params()), CorruptManifestError);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_params(trailing, target.params()), CorruptManifestError);
}

TEST(Checkpoint, SmallerModelNamesFirstMismatchedTensor) {
  const auto d = scratch_dir("mismatch");
  ModelConfig small;
  small.d_model = 64;
  save_checkpoint(Model<float>(small, 1), d);
  try {
    load_checkpoint_as(d, ModelConfig{});
    FAIL() << "expected ShapeMismatchError";
  } catch (const ShapeMismatchError& e) {
    EXPECT_EQ(e.tensor(), "main_encoder.enc_x.weight");
  }
  // The stored config rebuilds the right architecture.
  EXPECT_EQ(load_checkpoint(d).model.config().d_model, 64);
  fs::remove_all(d);
}

TEST(Checkpoint, DoubleLoadsFloatFile) {
  const Model<float> m(ModelConfig{}, 42);
  Model<double> d(ModelConfig{}, 1);
  deserialize_params(serialize_params(m.params()), d.params());
  for (std::size_t i = 0; i < m.params().size(); ++i) EXPECT_EQ(d.params()[i].value.cast<float>(), m.params()[i].value);
}

TEST(Checkpoint, ParamCountFileReportsDelta) {
  const auto d = scratch_dir("counts");
  save_checkpoint(Model<float>(ModelConfig{}, 1), d);
  const auto j = Json::parse(slurp(d / "param_count.json"));
  EXPECT_EQ(j["total"].get<long>(), 1241819);
  EXPECT_EQ(j["published"]["total"].get<long>(), 1290846);
  EXPECT_EQ(j["delta"]["total"].get<long>(), 1241819 - 1290846);
  fs::remove_all(d);
}

TEST(Checkpoint, MissingDirectoryIsCheckpointError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/glopt"), CheckpointError);
}

TEST(Json, ConfigsRoundTrip) {
  TrainConfig t;
  t.seed = 18446744073709551615ULL;
  t.epochs = 77;
  const auto t2 = train_config_from_json(Json::parse(to_json(t).dump()));
  EXPECT_EQ(t2.seed, t.seed);
  EXPECT_EQ(t2.epochs, 77);
  ModelConfig m;
  m.t_max = 12;
  EXPECT_EQ(model_config_from_json(to_json(m)), m);
  EXPECT_THROW(train_config_from_json(Json::parse(R"({"epochz": 3})")), std::invalid_argument);
  EXPECT_THROW(model_config_from_json(Json::parse(R"({"d_model": 30})")), std::invalid_argument);
}

}  // namespace
}  // namespace glopt
