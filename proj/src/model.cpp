#include "glopt/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "glopt/errors.hpp"
#include "glopt/rng.hpp"

namespace glopt {

using ad::Index;
using ad::Tape;
using ad::Var;

// ---------------------------------------------------------------------------
// Config and inputs

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("model config field '") + field + "': " + what);
  };
  require(d_model > 0 && d_model % 4 == 0, "d_model", "must be a positive multiple of 4");
  require(d_edv > 0, "d_edv", "must be positive");
  require(iter_hidden > 0, "iter_hidden", "must be positive");
  require(t_max > 0, "t_max", "must be positive");
  require(std::isfinite(stop_tau) && stop_tau > 0.0, "stop_tau", "must be positive");
  require(n_samples >= 4, "n_samples", "must be >= 4");
  require(fixed_unroll >= 0, "fixed_unroll", "must be >= 0");
}

void ModelInputs::validate() const {
  const std::size_t n = xs.size();
  if (n == 0 || ys.size() != n || dys.size() != n || cs.size() != n) {
    throw std::invalid_argument("model inputs: xs, ys, dys and cs must have the same non-zero length");
  }
  if (!(x0 >= 0.0 && x0 <= 1.0)) throw std::invalid_argument("model inputs: x0 must lie in [0, 1]");
}

ModelInputs make_inputs(const NoisySamples& samples, const GridSpec& grid) {
  const SplineFit fit = fit_interpolating_spline(samples.xs, samples.ys);
  ModelInputs in;
  in.xs = samples.xs;
  in.ys = samples.ys;
  in.dys = spline_derivative_at(fit, samples.xs);
  const auto c = fit.coeffs();
  in.cs.assign(c.begin() + 1, c.end() - 1);
  in.x0 = spline_argmin(fit, grid);
  return in;
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::kConverged:
      return "converged";
    case StopReason::kMaxIters:
      return "max_iters";
    case StopReason::kFixedUnroll:
      return "fixed_unroll";
  }
  return "unknown";
}

std::vector<double> Trajectory::positions() const {
  std::vector<double> out{x0};
  for (const auto& s : steps) out.push_back(s.x_next);
  return out;
}

// ---------------------------------------------------------------------------
// Parameter layout

namespace {

template <typename T>
detail::LinearIdx add_linear(ad::ParamStore<T>& store, const std::string& name, int in, int out) {
  detail::LinearIdx l;
  l.w = store.add(name + ".weight", out, in);
  l.b = store.add(name + ".bias", 1, out);
  return l;
}

template <typename T>
detail::CubicIdx add_cubic(ad::ParamStore<T>& store, const std::string& name) {
  detail::CubicIdx c;
  c.log_alpha = store.add(name + ".log_alpha", 1, 1);
  c.log_beta = store.add(name + ".log_beta", 1, 1);
  c.log_gamma = store.add(name + ".log_gamma", 1, 1);
  return c;
}

template <typename T>
detail::DenseCubicIdx add_dense_cubic(ad::ParamStore<T>& store, const std::string& name, int in, int out) {
  detail::DenseCubicIdx d;
  d.lin = add_linear(store, name, in, out);
  d.act = add_cubic(store, name + ".act");
  return d;
}

template <typename T>
detail::UNetIdx add_unet(ad::ParamStore<T>& store, const std::string& name, int dm) {
  detail::UNetIdx u;
  u.enc1 = add_dense_cubic(store, name + ".enc1", 4 * dm, 2 * dm);
  u.enc2 = add_dense_cubic(store, name + ".enc2", 2 * dm, dm);
  u.enc3 = add_dense_cubic(store, name + ".enc3", dm, dm / 2);
  u.bottleneck = add_dense_cubic(store, name + ".bottleneck", dm / 2, dm / 4);
  u.dec1 = add_dense_cubic(store, name + ".dec1", dm / 4, dm / 2);
  u.dec2 = add_dense_cubic(store, name + ".dec2", dm, dm);
  u.dec3 = add_dense_cubic(store, name + ".dec3", 2 * dm, 2 * dm);
  u.final_proj = add_dense_cubic(store, name + ".final", 4 * dm, dm);
  return u;
}

template <typename T>
detail::PoolIdx add_pool(ad::ParamStore<T>& store, const std::string& name, int dm) {
  detail::PoolIdx p;
  p.global = add_dense_cubic(store, name + ".global", dm, dm);
  p.focus = add_dense_cubic(store, name + ".focus", dm, dm);
  p.local = add_dense_cubic(store, name + ".local", dm, dm);
  return p;
}

constexpr std::array<const char*, 4> kModalities{"x", "y", "dy", "c"};

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
void check_finite(const Var<T>& v, const char* stage, int iteration) {
  if (v.value().allFinite()) return;
  std::string msg = std::string("non-finite values in ") + stage;
  if (iteration >= 0) msg += " at iteration " + std::to_string(iteration);
  throw NumericError(msg);
}

}  // namespace

template <typename T>
Model<T>::Model(ModelConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  const int dm = cfg_.d_model;
  const int de = cfg_.d_edv;
  auto& s = params_;
  for (std::size_t k = 0; k < 4; ++k) {
    layout_.modality[k] = add_dense_cubic(s, std::string("main_encoder.enc_") + kModalities[k], 1, dm);
  }
  layout_.main_unet = add_unet(s, "main_encoder.unet", dm);
  layout_.main_pool = add_pool(s, "main_encoder.pool", dm);
  layout_.main_edv = add_linear(s, "main_encoder.edv", 3 * dm, de);
  layout_.main_delta = add_linear(s, "main_encoder.delta", 3 * dm, 1);

  layout_.iter_hidden = add_dense_cubic(s, "iterator.hidden", de + 2, cfg_.iter_hidden);
  layout_.iter_dir = add_linear(s, "iterator.direction", cfg_.iter_hidden, 1);
  layout_.iter_step = add_linear(s, "iterator.step", cfg_.iter_hidden, 1);

  layout_.upd_expand = add_dense_cubic(s, "updater.expand", de, 4 * dm);
  layout_.upd_decomp_unet = add_unet(s, "updater.decompressor.unet", dm);
  for (std::size_t k = 0; k < 4; ++k) {
    layout_.upd_modifier[k] = add_dense_cubic(s, std::string("updater.modifier_") + kModalities[k], dm + 2, dm);
  }
  layout_.upd_reenc_unet = add_unet(s, "updater.reencoder.unet", dm);
  layout_.upd_pool = add_pool(s, "updater.reencoder.pool", dm);
  layout_.upd_edv = add_linear(s, "updater.reencoder.edv", 3 * dm, de);

  initialize(init_seed);
}

template <typename T>
void Model<T>::initialize(std::uint64_t seed) {
  CounterRng rng(derive_seed(seed, "init"));
  for (auto& entry : params_) {
    auto& v = entry.value;
    if (ends_with(entry.name, ".weight")) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(v.cols()));
      for (Index k = 0; k < v.size(); ++k) v.data()[k] = static_cast<T>(rng.uniform(-bound, bound));
    } else if (ends_with(entry.name, ".log_alpha")) {
      v.setConstant(static_cast<T>(std::log(0.1)));
    } else if (ends_with(entry.name, ".log_beta")) {
      v.setConstant(static_cast<T>(std::log(0.01)));
    } else if (ends_with(entry.name, ".log_gamma")) {
      v.setConstant(static_cast<T>(std::log(0.001)));
    } else {
      v.setZero();
    }
  }
}

template <typename T>
ParamCounts Model<T>::param_count() const {
  ParamCounts c;
  for (const auto& e : params_) {
    const auto n = static_cast<std::size_t>(e.value.size());
    if (e.name.starts_with("main_encoder.")) {
      c.main_encoder += n;
    } else if (e.name.starts_with("iterator.")) {
      c.iterator += n;
    } else {
      c.updater += n;
    }
  }
  c.total = c.main_encoder + c.iterator + c.updater;
  return c;
}

// ---------------------------------------------------------------------------
// Layers

template <typename T>
Var<T> Model<T>::linear(Tape<T>& tape, Var<T> x, const detail::LinearIdx& l) const {
  return ad::linear(x, tape.param(l.w), tape.param(l.b));
}

template <typename T>
Var<T> Model<T>::dense_cubic(Tape<T>& tape, Var<T> x, const detail::DenseCubicIdx& l) const {
  const ad::StableCubicVars<T> act{tape.param(l.act.log_alpha), tape.param(l.act.log_beta),
                                   tape.param(l.act.log_gamma)};
  return ad::stable_cubic(linear(tape, x, l.lin), act);
}

template <typename T>
Var<T> Model<T>::unet(Tape<T>& tape, Var<T> x, const detail::UNetIdx& u) const {
  const auto z1 = dense_cubic(tape, x, u.enc1);
  const auto z2 = dense_cubic(tape, z1, u.enc2);
  const auto z3 = dense_cubic(tape, z2, u.enc3);
  const auto bot = dense_cubic(tape, z3, u.bottleneck);
  const auto u1 = ad::concat({dense_cubic(tape, bot, u.dec1), z3});
  const auto u2 = ad::concat({dense_cubic(tape, u1, u.dec2), z2});
  const auto u3 = ad::concat({dense_cubic(tape, u2, u.dec3), z1});
  return dense_cubic(tape, u3, u.final_proj);
}

template <typename T>
Var<T> Model<T>::pool(Tape<T>& tape, Var<T> f, const detail::PoolIdx& p) const {
  const auto m = f.rows() == 1 ? f : ad::mean_over_samples(f);
  return ad::concat({dense_cubic(tape, m, p.global), dense_cubic(tape, m, p.focus), dense_cubic(tape, m, p.local)});
}

// ---------------------------------------------------------------------------
// Stages

template <typename T>
EncodingVars<T> Model<T>::encode(Tape<T>& tape, const ModelInputs& in) const {
  in.validate();
  if (in.size() != static_cast<std::size_t>(cfg_.n_samples)) {
    throw std::invalid_argument("model inputs have " + std::to_string(in.size()) + " samples, config expects " +
                                std::to_string(cfg_.n_samples));
  }
  const Index n = static_cast<Index>(in.size());
  const std::array<const std::vector<double>*, 4> channels{&in.xs, &in.ys, &in.dys, &in.cs};
  std::array<Var<T>, 4> h;
  for (std::size_t k = 0; k < 4; ++k) {
    ad::Matrix<T> col(n, 1);
    for (Index i = 0; i < n; ++i) col(i, 0) = static_cast<T>((*channels[k])[static_cast<std::size_t>(i)]);
    h[k] = dense_cubic(tape, tape.constant(std::move(col)), layout_.modality[k]);
  }
  const auto cat = ad::concat<T>(std::span<const Var<T>>(h));
  check_finite(cat, "main encoder modality projections", -1);
  const auto fused = unet(tape, cat, layout_.main_unet);
  check_finite(fused, "main encoder U-Net", -1);
  const auto g = pool(tape, fused, layout_.main_pool);
  EncodingVars<T> out;
  out.e = linear(tape, g, layout_.main_edv);
  out.delta = ad::softplus(linear(tape, g, layout_.main_delta));
  check_finite(out.e, "main encoder output", -1);
  check_finite(out.delta, "initial step predictor", -1);
  return out;
}

template <typename T>
StepVars<T> Model<T>::iterate_step(Tape<T>& tape, Var<T> e, Var<T> x_t, Var<T> delta_prev, int iteration) const {
  const auto v = ad::concat({e, x_t, delta_prev});
  const auto h = dense_cubic(tape, v, layout_.iter_hidden);
  StepVars<T> out;
  out.d = ad::tanh(linear(tape, h, layout_.iter_dir));
  out.s = ad::softplus(linear(tape, h, layout_.iter_step));
  out.x_next = ad::clamp(ad::add(x_t, ad::mul(out.s, out.d)), T(0), T(1));
  check_finite(out.x_next, "iterator", iteration);
  check_finite(out.s, "iterator", iteration);
  return out;
}

template <typename T>
Var<T> Model<T>::update_encoding(Tape<T>& tape, Var<T> e, Var<T> x_next, Var<T> s, Index rows,
                                 int iteration) const {
  if (rows < 1) throw std::invalid_argument("update_encoding: rows must be >= 1");
  const auto expanded = dense_cubic(tape, e, layout_.upd_expand);
  const auto tiled = rows == 1 ? expanded : ad::tile_rows(expanded, rows);
  const auto r = unet(tape, tiled, layout_.upd_decomp_unet);
  check_finite(r, "updater decompressor", iteration);
  const auto cond = ad::concat({r, rows == 1 ? x_next : ad::tile_rows(x_next, rows),
                                rows == 1 ? s : ad::tile_rows(s, rows)});
  std::array<Var<T>, 4> m;
  for (std::size_t k = 0; k < 4; ++k) m[k] = dense_cubic(tape, cond, layout_.upd_modifier[k]);
  const auto mcat = ad::concat<T>(std::span<const Var<T>>(m));
  const auto f = unet(tape, mcat, layout_.upd_reenc_unet);
  check_finite(f, "updater re-encoder", iteration);
  const auto e_next = linear(tape, pool(tape, f, layout_.upd_pool), layout_.upd_edv);
  check_finite(e_next, "updater output", iteration);
  return e_next;
}

template <typename T>
GraphTrajectory<T> Model<T>::run_graph(Tape<T>& tape, const ModelInputs& in, bool collapse_updater) const {
  const auto enc = encode(tape, in);
  GraphTrajectory<T> out;
  out.values.x0 = in.x0;
  auto e = enc.e;
  auto delta_prev = enc.delta;
  auto x = tape.scalar(static_cast<T>(in.x0));
  const bool fixed = cfg_.fixed_unroll > 0;
  const int limit = fixed ? cfg_.fixed_unroll : cfg_.t_max;
  const Index rows = collapse_updater ? 1 : static_cast<Index>(in.size());
  std::vector<double> s_hist;
  out.values.stop_reason = fixed ? StopReason::kFixedUnroll : StopReason::kMaxIters;
  for (int t = 0; t < limit; ++t) {
    const auto step = iterate_step(tape, e, x, delta_prev, t);
    StepRecord rec;
    rec.t = t;
    rec.x = static_cast<double>(x.scalar());
    rec.s = static_cast<double>(step.s.scalar());
    rec.d = static_cast<double>(step.d.scalar());
    rec.x_next = static_cast<double>(step.x_next.scalar());
    out.values.steps.push_back(rec);
    out.xs.push_back(step.x_next);
    s_hist.push_back(rec.s);
    x = step.x_next;
    delta_prev = step.s;
    // Stop test on the emitted step sizes; control flow only.
    if (!fixed && t >= 2 &&
        ad::variance3_value(s_hist[static_cast<std::size_t>(t - 2)], s_hist[static_cast<std::size_t>(t - 1)],
                            s_hist[static_cast<std::size_t>(t)]) < cfg_.stop_tau) {
      out.values.stop_reason = StopReason::kConverged;
      break;
    }
    // The encoding after the final permitted step would never be read.
    if (t + 1 == limit) break;
    e = update_encoding(tape, e, x, step.s, rows, t);
  }
  out.values.x_final = out.values.steps.back().x_next;
  return out;
}

template <typename T>
Trajectory Model<T>::run(const ModelInputs& in) const {
  Tape<T> tape(&params_);
  return run_graph(tape, in).values;
}

template <typename T>
std::pair<std::vector<double>, double> Model<T>::encode_values(const ModelInputs& in) const {
  Tape<T> tape(&params_);
  const auto enc = encode(tape, in);
  std::vector<double> e(static_cast<std::size_t>(enc.e.cols()));
  for (std::size_t k = 0; k < e.size(); ++k) e[k] = static_cast<double>(enc.e.value()(0, static_cast<Index>(k)));
  return {e, static_cast<double>(enc.delta.scalar())};
}

template class Model<float>;
template class Model<double>;

}  // namespace glopt
