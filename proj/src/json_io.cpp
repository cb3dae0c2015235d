#include "glopt/json_io.hpp"

#include <charconv>
#include <stdexcept>

namespace glopt {

namespace {

// Reads field `key` when present; a wrong type is reported by name.
template <typename V>
void read(const Json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument(std::string("field '") + key + "' has the wrong type");
  }
}

void read_interval(const Json& j, const char* key, Interval& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw std::invalid_argument(std::string("field '") + key + "' must be [lo, hi]");
  }
  out = {v[0].get<double>(), v[1].get<double>()};
}

void reject_unknown(const Json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw std::invalid_argument(std::string("unknown ") + what + " field '" + key + "'");
  }
}

Json interval(const Interval& iv) { return Json::array({iv.lo, iv.hi}); }

}  // namespace

std::string seed_to_string(std::uint64_t seed) { return std::to_string(seed); }

std::uint64_t seed_from_json(const Json& j) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && ptr == s.data() + s.size() && !s.empty()) return v;
  }
  throw std::invalid_argument("seed must be a non-negative integer or decimal string");
}

Json to_json(const DifficultyPreset& p) {
  Json j;
  j["name"] = p.name;
  j["n_samples"] = p.n_samples;
  j["noise_multiplier"] = p.noise_multiplier;
  j["knot_spacing"] = interval(p.knot_spacing);
  j["oscillation_strength"] = p.oscillation_strength;
  j["depth"] = interval(p.depth);
  j["width"] = interval(p.width);
  j["center"] = interval(p.center);
  j["amplitude"] = interval(p.amplitude);
  j["wavelength"] = interval(p.wavelength);
  j["jitter"] = p.jitter;
  return j;
}

DifficultyPreset preset_from_json(const Json& j) {
  if (j.is_string()) return preset_by_name(j.get<std::string>());
  reject_unknown(j,
                 {"name", "base", "n_samples", "noise_multiplier", "knot_spacing", "oscillation_strength", "depth",
                  "width", "center", "amplitude", "wavelength", "jitter"},
                 "preset");
  // Missing fields come from "base", else from the built-in preset of the
  // same name, else from nightmare.
  std::string base = "nightmare";
  if (j.contains("name") && j.at("name").is_string()) {
    const auto name = j.at("name").get<std::string>();
    if (name == "nightmare" || name == "moderate" || name == "smooth") base = name;
  }
  read(j, "base", base);
  DifficultyPreset p = preset_by_name(base);
  read(j, "name", p.name);
  read(j, "n_samples", p.n_samples);
  read(j, "noise_multiplier", p.noise_multiplier);
  read_interval(j, "knot_spacing", p.knot_spacing);
  read(j, "oscillation_strength", p.oscillation_strength);
  read_interval(j, "depth", p.depth);
  read_interval(j, "width", p.width);
  read_interval(j, "center", p.center);
  read_interval(j, "amplitude", p.amplitude);
  read_interval(j, "wavelength", p.wavelength);
  read(j, "jitter", p.jitter);
  p.validate();
  return p;
}

Json to_json(const ModelConfig& c) {
  Json j;
  j["d_model"] = c.d_model;
  j["d_edv"] = c.d_edv;
  j["iter_hidden"] = c.iter_hidden;
  j["t_max"] = c.t_max;
  j["stop_tau"] = c.stop_tau;
  j["n_samples"] = c.n_samples;
  j["fixed_unroll"] = c.fixed_unroll;
  return j;
}

ModelConfig model_config_from_json(const Json& j) {
  reject_unknown(j, {"d_model", "d_edv", "iter_hidden", "t_max", "stop_tau", "n_samples", "fixed_unroll"},
                 "model config");
  ModelConfig c;
  read(j, "d_model", c.d_model);
  read(j, "d_edv", c.d_edv);
  read(j, "iter_hidden", c.iter_hidden);
  read(j, "t_max", c.t_max);
  read(j, "stop_tau", c.stop_tau);
  read(j, "n_samples", c.n_samples);
  read(j, "fixed_unroll", c.fixed_unroll);
  c.validate();
  return c;
}

Json to_json(const TrainConfig& c) {
  Json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["preset"] = c.preset;
  j["seed"] = seed_to_string(c.seed);
  j["checkpoint_every"] = c.checkpoint_every;
  j["log_every"] = c.log_every;
  j["threads"] = c.threads;
  j["clip_norm"] = c.clip_norm;
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  reject_unknown(j,
                 {"epochs", "batch_size", "learning_rate", "preset", "seed", "checkpoint_every", "log_every",
                  "threads", "clip_norm"},
                 "train config");
  TrainConfig c;
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "preset", c.preset);
  if (j.contains("seed")) c.seed = seed_from_json(j.at("seed"));
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "log_every", c.log_every);
  read(j, "threads", c.threads);
  read(j, "clip_norm", c.clip_norm);
  c.validate();
  return c;
}

Json to_json(const LossConfig& c) {
  Json j;
  j["alpha_traj"] = c.alpha_traj;
  return j;
}

LossConfig loss_config_from_json(const Json& j) {
  reject_unknown(j, {"alpha_traj"}, "loss config");
  LossConfig c;
  read(j, "alpha_traj", c.alpha_traj);
  c.validate();
  return c;
}

Json to_json(const Case& c) {
  Json j;
  j["format"] = "glopt-case";
  j["version"] = 1;
  j["seed"] = seed_to_string(c.seed);
  j["preset"] = to_json(c.preset);
  const auto knots = c.function.curve.knots().knots();
  j["knots"] = std::vector<double>(knots.begin(), knots.end());
  const auto coeffs = c.function.curve.coeffs();
  j["coeffs"] = std::vector<double>(coeffs.begin(), coeffs.end());
  j["argmin_true"] = c.function.argmin_true;
  j["value_range"] = c.function.value_range;
  j["attempts"] = c.function.attempts;
  j["xs"] = c.samples.xs;
  j["ys"] = c.samples.ys;
  j["sigma"] = c.samples.sigma;
  return j;
}

Case case_from_json(const Json& j) {
  if (!j.is_object() || j.value("format", "") != "glopt-case") throw std::invalid_argument("not a glopt case file");
  if (j.value("version", 0) != 1) throw std::invalid_argument("unsupported case file version");
  Case c;
  try {
    c.seed = seed_from_json(j.at("seed"));
    c.preset = preset_from_json(j.at("preset"));
    const auto knots = j.at("knots").get<std::vector<double>>();
    if (knots.size() < 8) throw std::invalid_argument("case file: knot vector too short");
    const std::vector<double> interior(knots.begin() + 4, knots.end() - 4);
    KnotVector kv(interior);
    for (std::size_t i = 0; i < knots.size(); ++i) {
      if (kv[i] != knots[i]) throw std::invalid_argument("case file: knots are not clamped on [0, 1]");
    }
    c.function.curve = BSpline(std::move(kv), j.at("coeffs").get<std::vector<double>>());
    c.function.argmin_true = j.at("argmin_true").get<double>();
    c.function.value_range = j.value("value_range", 0.0);
    c.function.attempts = j.value("attempts", std::size_t{0});
    c.samples.xs = j.at("xs").get<std::vector<double>>();
    c.samples.ys = j.at("ys").get<std::vector<double>>();
    c.samples.sigma = j.value("sigma", 0.0);
    c.samples.seed = c.seed;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("case file: ") + e.what());
  }
  if (c.samples.xs.size() != c.samples.ys.size()) throw std::invalid_argument("case file: xs and ys differ in length");
  return c;
}

Json to_json(const Trajectory& t) {
  Json j;
  j["x0"] = t.x0;
  j["x_final"] = t.x_final;
  j["stop_reason"] = to_string(t.stop_reason);
  j["steps"] = Json::array();
  for (const auto& s : t.steps) {
    j["steps"].push_back({{"t", s.t}, {"x_t", s.x}, {"s_t", s.s}, {"d_t", s.d}, {"x_next", s.x_next}});
  }
  return j;
}

}  // namespace glopt
