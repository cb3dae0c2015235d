#include "glopt/verify.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "glopt/trainer.hpp"

namespace glopt {

using namespace ad;

namespace {

using Mat = Matrix<double>;
constexpr double kEps = 1e-6;

Mat random_matrix(std::mt19937_64& gen, Index r, Index c, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(r, c);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = u(gen);
  return m;
}

// Keeps entries 2e-3 away from kinks so central differences never straddle one.
void push_off_kinks(Mat& m, const std::vector<double>& kinks) {
  for (Index k = 0; k < m.size(); ++k) {
    for (double kink : kinks) {
      double& v = m.data()[k];
      if (std::abs(v - kink) < 1e-3) v = kink + 2e-3;
    }
  }
}

// Fixed positive weights so every output entry contributes distinctly.
Var<double> weighted_sum(Tape<double>& t, Var<double> y, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  return sum(mul(y, t.constant(random_matrix(gen, y.rows(), y.cols(), 0.5, 1.5))));
}

void absorb(SuiteResult& s, const GradCheckResult& r) {
  s.checked += r.checked;
  if (r.max_rel_error >= s.max_rel_error) {
    s.max_rel_error = r.max_rel_error;
    s.worst = r.worst_tensor + "[" + std::to_string(r.worst_index) + "]";
  }
}

struct Unary {
  const char* name;
  std::function<Var<double>(Var<double>)> op;
  std::vector<double> kinks;
  double lo, hi;
};

}  // namespace

std::vector<SuiteResult> primitive_gradcheck_suites(int trials, std::uint64_t seed) {
  std::vector<SuiteResult> out;
  std::mt19937_64 gen(seed);

  const std::vector<Unary> unary{
      {"relu", [](auto x) { return relu(x); }, {0.0}, -2, 2},
      {"tanh", [](auto x) { return ad::tanh(x); }, {}, -3, 3},
      {"softplus", [](auto x) { return softplus(x); }, {}, -6, 6},
      {"clamp_max", [](auto x) { return clamp_max(x, 10.0); }, {10.0}, 5, 15},
      {"clamp", [](auto x) { return clamp(x, 0.0, 1.0); }, {0.0, 1.0}, -0.5, 1.5},
      {"abs", [](auto x) { return ad::abs(x); }, {0.0}, -2, 2},
      {"square", [](auto x) { return square(x); }, {}, -2, 2},
      {"scale", [](auto x) { return scale(x, -1.7); }, {}, -2, 2},
      {"add_scalar", [](auto x) { return add_scalar(x, 0.3); }, {}, -2, 2},
      {"mean_over_samples", [](auto x) { return mean_over_samples(x); }, {}, -2, 2},
      {"mean+slice_cols+tile_rows", [](auto x) { return tile_rows(slice_cols(mean_over_samples(x), 1, 2), 3); }, {}, -2, 2},
      {"sum", [](auto x) { return sum(x); }, {}, -2, 2},
  };
  for (const auto& u : unary) {
    SuiteResult s{u.name, 0.0, kPrimitiveGradTol, 0, ""};
    for (int trial = 0; trial < trials; ++trial) {
      ParamStore<double> store;
      store.add("x", 3, 4);
      store[0].value = random_matrix(gen, 3, 4, u.lo, u.hi);
      push_off_kinks(store[0].value, u.kinks);
      const std::uint64_t w = gen();
      absorb(s, grad_check<double>(store, [&](Tape<double>& t) { return weighted_sum(t, u.op(t.param(0)), w); }, kEps));
    }
    out.push_back(s);
  }

  {
    SuiteResult s{"add+sub+mul+linear+concat", 0.0, kPrimitiveGradTol, 0, ""};
    for (int trial = 0; trial < trials; ++trial) {
      ParamStore<double> store;
      store.add("a", 4, 3);
      store.add("b", 4, 3);
      store.add("w", 5, 3);
      store.add("bias", 1, 5);
      for (std::size_t p = 0; p < store.size(); ++p) {
        store[p].value = random_matrix(gen, store[p].value.rows(), store[p].value.cols(), -2, 2);
      }
      const std::uint64_t w = gen();
      absorb(s, grad_check<double>(
                    store,
                    [&](Tape<double>& t) {
                      const auto a = t.param(0), b = t.param(1);
                      return weighted_sum(t, concat({add(a, b), sub(a, b), mul(a, b), linear(a, t.param(2), t.param(3))}),
                                          w);
                    },
                    kEps));
    }
    out.push_back(s);
  }

  {
    SuiteResult s{"variance3", 0.0, kPrimitiveGradTol, 0, ""};
    for (int trial = 0; trial < trials; ++trial) {
      ParamStore<double> store;
      for (const char* n : {"a", "b", "c"}) store[store.add(n, 1, 1)].value = random_matrix(gen, 1, 1, -2, 2);
      absorb(s, grad_check<double>(
                    store, [](Tape<double>& t) { return variance3(t.param(0), t.param(1), t.param(2)); }, kEps));
    }
    out.push_back(s);
  }

  {
    SuiteResult s{"stable_cubic", 0.0, kPrimitiveGradTol, 0, ""};
    for (int trial = 0; trial < trials; ++trial) {
      ParamStore<double> store;
      store.add("z", 3, 5);
      store[0].value = random_matrix(gen, 3, 5, -3, 13);
      push_off_kinks(store[0].value, {0.0, kStableCubicClamp});
      for (const char* n : {"log_alpha", "log_beta", "log_gamma"}) {
        store[store.add(n, 1, 1)].value = random_matrix(gen, 1, 1, -5, 0);
      }
      const std::uint64_t w = gen();
      absorb(s, grad_check<double>(
                    store,
                    [&](Tape<double>& t) {
                      const StableCubicVars<double> p{t.param(1), t.param(2), t.param(3)};
                      return weighted_sum(t, stable_cubic(t.param(0), p), w);
                    },
                    kEps));
    }
    out.push_back(s);
  }
  return out;
}

ModelInputs toy_inputs() {
  NoisySamples s;
  for (int i = 0; i < 5; ++i) {
    const double x = 0.1 + 0.2 * i;
    s.xs.push_back(x);
    s.ys.push_back((x - 0.4) * (x - 0.4) + 0.05 * std::sin(20.0 * x));
  }
  return make_inputs(s);
}

ModelConfig toy_model_config() {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.d_edv = 8;
  cfg.iter_hidden = 16;
  cfg.n_samples = 5;
  cfg.fixed_unroll = 2;
  return cfg;
}

SuiteResult trajectory_gradcheck(ModelConfig cfg, std::size_t max_per_tensor, std::uint64_t init_seed) {
  cfg.n_samples = 5;
  if (cfg.fixed_unroll == 0) cfg.fixed_unroll = 2;
  Model<double> model(cfg, init_seed);
  const ModelInputs in = toy_inputs();
  constexpr double kXStar = 0.42;
  const LossConfig lcfg;
  auto objective = [&](Tape<double>& t) {
    const auto g = model.run_graph(t, in);
    return trajectory_loss<double>(t, in.x0, g.xs, kXStar, lcfg);
  };
  SuiteResult s{"trajectory_loss (" + std::to_string(cfg.fixed_unroll) + "-step unroll, 5 samples, d_model " +
                    std::to_string(cfg.d_model) + ")",
                0.0, kTrajectoryGradTol, 0, ""};
  absorb(s, grad_check<double>(model.params(), objective, kEps, max_per_tensor));
  return s;
}

std::vector<SuiteResult> all_gradcheck_suites(const ModelConfig& trajectory_cfg, std::size_t max_per_tensor) {
  auto out = primitive_gradcheck_suites();
  out.push_back(trajectory_gradcheck(trajectory_cfg, max_per_tensor));
  return out;
}

}  // namespace glopt
