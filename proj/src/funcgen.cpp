#include "glopt/funcgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "glopt/errors.hpp"
#include "glopt/rng.hpp"

namespace glopt {

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw std::invalid_argument("preset field '" + field + "': " + what);
}

void require_interval(const Interval& iv, const std::string& field) {
  require(std::isfinite(iv.lo) && std::isfinite(iv.hi) && iv.lo <= iv.hi, field, "needs finite lo <= hi");
}

std::size_t grid_index_ceil(double x, std::size_t count) {
  return static_cast<std::size_t>(std::ceil(x * static_cast<double>(count) - 1e-9));
}

std::size_t grid_index_floor(double x, std::size_t count) {
  return static_cast<std::size_t>(std::floor(x * static_cast<double>(count) + 1e-9));
}

// True iff the grid argmin of f (first occurrence) lies in [lo_k, hi_k].
// Scans the interior first, then the flanks from the outer ends inward so a
// low boundary rejects early.
bool interior_argmin(const BSpline& f, const GridSpec& grid, std::size_t lo_k, std::size_t hi_k) {
  double interior_min = f.eval(grid.point(lo_k));
  for (std::size_t k = lo_k + 1; k <= hi_k; ++k) interior_min = std::min(interior_min, f.eval(grid.point(k)));
  for (std::size_t k = 0; k < lo_k; ++k) {
    if (f.eval(grid.point(k)) <= interior_min) return false;
  }
  for (std::size_t k = grid.count; k > hi_k; --k) {
    if (f.eval(grid.point(k)) < interior_min) return false;
  }
  return true;
}

}  // namespace

void DifficultyPreset::validate() const {
  require(n_samples >= 4, "n_samples", "must be >= 4");
  require(std::isfinite(noise_multiplier) && noise_multiplier >= 0.0, "noise_multiplier", "must be >= 0");
  require_interval(knot_spacing, "knot_spacing");
  require(knot_spacing.lo > 0.0 && knot_spacing.hi < 0.5, "knot_spacing", "needs 0 < lo <= hi < 0.5");
  require(std::isfinite(oscillation_strength) && oscillation_strength >= 0.0, "oscillation_strength",
          "must be >= 0");
  require_interval(depth, "depth");
  require_interval(width, "width");
  require(width.lo > 0.0, "width", "must be positive");
  require_interval(center, "center");
  require_interval(amplitude, "amplitude");
  require_interval(wavelength, "wavelength");
  require(wavelength.lo > 0.0, "wavelength", "must be positive");
  require(std::isfinite(jitter) && jitter >= 0.0, "jitter", "must be >= 0");
}

DifficultyPreset nightmare_preset() {
  DifficultyPreset p;
  p.name = "nightmare";
  return p;
}

DifficultyPreset smooth_preset() {
  DifficultyPreset p;
  p.name = "smooth";
  p.noise_multiplier = 0.0;
  p.knot_spacing = {0.08, 0.15};
  p.oscillation_strength = 0.0;
  p.depth = {1.0, 2.0};
  p.width = {0.3, 0.5};
  p.jitter = 0.0;
  return p;
}

DifficultyPreset moderate_preset() {
  DifficultyPreset p;
  p.name = "moderate";
  p.noise_multiplier = 1.0;
  p.knot_spacing = {0.05, 0.1};
  p.oscillation_strength = 3.0;
  p.depth = {0.5, 1.5};
  p.width = {0.3, 0.5};
  p.wavelength = {0.15, 0.3};
  return p;
}

DifficultyPreset preset_by_name(const std::string& name) {
  if (name == "nightmare") return nightmare_preset();
  if (name == "moderate") return moderate_preset();
  if (name == "smooth") return smooth_preset();
  throw std::invalid_argument("unknown preset '" + name + "' (expected nightmare, moderate or smooth)");
}

double noise_sigma(double value_range, double noise_multiplier) {
  const double scaled = value_range / 10.0;
  return std::sqrt(scaled * scaled * noise_multiplier);
}

TargetFunction generate_function(const DifficultyPreset& preset, std::uint64_t seed) {
  preset.validate();
  CounterRng rng(derive_seed(seed, "function"));
  const GridSpec grid(kOracleGrid);
  const std::size_t lo_k = grid_index_ceil(kArgminLo, grid.count);
  const std::size_t hi_k = grid_index_floor(kArgminHi, grid.count);

  for (std::size_t attempt = 1; attempt <= kMaxGenerationAttempts; ++attempt) {
    const double spacing = rng.uniform(preset.knot_spacing.lo, preset.knot_spacing.hi);
    const auto intervals = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(1.0 / spacing)));
    KnotVector knots = KnotVector::uniform(intervals);

    const double center = rng.uniform(preset.center.lo, preset.center.hi);
    const double depth = rng.uniform(preset.depth.lo, preset.depth.hi);
    const double width = rng.uniform(preset.width.lo, preset.width.hi);
    const double amp = rng.uniform(preset.amplitude.lo, preset.amplitude.hi);
    const double wavelength = rng.uniform(preset.wavelength.lo, preset.wavelength.hi);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    std::vector<double> coeffs(knots.num_basis());
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      const double t = knots.greville(i);
      const double u = (t - center) / width;
      const double bowl = depth * u * u;
      const double osc =
          preset.oscillation_strength * amp * std::sin(2.0 * std::numbers::pi * t / wavelength + phase);
      coeffs[i] = bowl + osc + rng.uniform(-preset.jitter, preset.jitter);
    }
    BSpline curve(std::move(knots), std::move(coeffs));

    if (!interior_argmin(curve, grid, lo_k, hi_k)) continue;

    const auto values = curve.eval_grid(grid.count);
    const std::size_t best = argmin_index(values);
    if (best < lo_k || best > hi_k) continue;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double range = *mx - *mn;
    const double x_star = grid.point(best);
    if (std::abs(curve.derivative(x_star)) > kMaxSlopeAtMinimum * range) continue;

    TargetFunction f;
    f.curve = std::move(curve);
    f.argmin_true = x_star;
    f.value_range = range;
    f.attempts = attempt;
    return f;
  }
  throw GenerationFailedError(kMaxGenerationAttempts, seed);
}

NoisySamples sample_noisy(const TargetFunction& f, const DifficultyPreset& preset, std::uint64_t seed) {
  preset.validate();
  CounterRng rng(derive_seed(seed, "noise"));
  const auto n = static_cast<std::size_t>(preset.n_samples);
  const double spacing = 1.0 / static_cast<double>(n - 1);

  NoisySamples s;
  s.seed = seed;
  s.xs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = static_cast<double>(i) * spacing;
    if (i > 0 && i + 1 < n) x += rng.uniform(-kSampleJitter, kSampleJitter) * spacing;
    s.xs[i] = x;
  }
  s.xs.back() = 1.0;

  s.ys.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.ys[i] = f(s.xs[i]);
  const auto [mn, mx] = std::minmax_element(s.ys.begin(), s.ys.end());
  s.sigma = noise_sigma(*mx - *mn, preset.noise_multiplier);
  if (s.sigma > 0.0) {
    for (double& y : s.ys) y += s.sigma * rng.normal();
  }
  return s;
}

double exhaustive_argmin(const BSpline& f, const GridSpec& grid) {
  return grid.point(argmin_index(f.eval_grid(grid.count)));
}

std::size_t count_grid_local_minima(const BSpline& f, const GridSpec& grid) {
  const auto v = f.eval_grid(grid.count);
  std::size_t count = 0;
  for (std::size_t k = 1; k + 1 < v.size(); ++k) {
    if (v[k] < v[k - 1] && v[k] < v[k + 1]) ++count;
  }
  return count;
}

Case make_case(const DifficultyPreset& preset, std::uint64_t seed) {
  Case c;
  c.seed = seed;
  c.preset = preset;
  c.function = generate_function(preset, seed);
  c.samples = sample_noisy(c.function, preset, seed);
  return c;
}

}  // namespace glopt
