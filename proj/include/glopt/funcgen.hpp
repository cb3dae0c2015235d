#pragma once

// Random multi-modal target functions, noisy sampling and the exhaustive
// grid oracle that labels the true global minimum.

#include <cstdint>
#include <string>
#include <vector>

#include "glopt/spline.hpp"

namespace glopt {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Difficulty preset. The first four fields define the difficulty; the
/// remaining ones are the constants of the coefficient recipe
///   c_i = bowl(t_i) + oscillation(t_i) + jitter_i,   t_i = Greville abscissa
///   bowl        = depth * ((t - center) / width)^2
///   oscillation = oscillation_strength * A * sin(2 pi t / wavelength + phase)
///   jitter      ~ U(-jitter, jitter)
/// A negative depth gives a hill whose low flanks compete with the interior
/// minimum; rejection keeps only functions whose minimum is interior.
struct DifficultyPreset {
  std::string name = "custom";
  int n_samples = 40;
  double noise_multiplier = 3.0;
  Interval knot_spacing{0.03, 0.08};
  double oscillation_strength = 9.0;

  Interval depth{-0.8, -0.4};
  Interval width{0.5, 0.8};
  Interval center{0.35, 0.65};
  Interval amplitude{0.2, 0.6};
  Interval wavelength{0.2, 0.35};
  double jitter = 0.1;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

DifficultyPreset nightmare_preset();
/// Noise-free single bowl, no oscillation.
DifficultyPreset smooth_preset();
DifficultyPreset moderate_preset();

/// Looks up "nightmare", "moderate" or "smooth"; throws std::invalid_argument.
DifficultyPreset preset_by_name(const std::string& name);

struct TargetFunction {
  BSpline curve;
  double argmin_true = 0.0;
  double value_range = 0.0;  // max - min over the oracle grid
  std::size_t attempts = 0;  // rejection-sampling attempts used

  double operator()(double x) const { return curve.eval(x); }
};

struct NoisySamples {
  std::vector<double> xs;
  std::vector<double> ys;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kOracleGrid = 2000;
inline constexpr std::size_t kMaxGenerationAttempts = 1000;
inline constexpr double kArgminLo = 0.25;
inline constexpr double kArgminHi = 0.75;
/// Reject when |f'(x*)| exceeds this fraction of the value range.
inline constexpr double kMaxSlopeAtMinimum = 0.1;
/// Interior sample jitter as a fraction of the nominal spacing.
inline constexpr double kSampleJitter = 0.2;

/// sigma = sqrt((delta_y / 10)^2 * nu).
double noise_sigma(double value_range, double noise_multiplier);

/// Rejection-sampled target whose oracle minimum lies in [0.25, 0.75].
/// Deterministic in (preset, seed). Throws GenerationFailedError after
/// kMaxGenerationAttempts rejected draws.
TargetFunction generate_function(const DifficultyPreset& preset, std::uint64_t seed);

/// n jittered-uniform positions (endpoints fixed at 0 and 1) observed with
/// Gaussian noise whose sigma comes from the noiseless range at those points.
NoisySamples sample_noisy(const TargetFunction& f, const DifficultyPreset& preset, std::uint64_t seed);

/// Grid point minimising f; ties go to the smallest x.
double exhaustive_argmin(const BSpline& f, const GridSpec& grid);
inline double exhaustive_argmin(const TargetFunction& f, const GridSpec& grid) {
  return exhaustive_argmin(f.curve, grid);
}

/// Strict interior local minima of f on the grid.
std::size_t count_grid_local_minima(const BSpline& f, const GridSpec& grid);

/// One fully specified problem instance.
struct Case {
  std::uint64_t seed = 0;
  DifficultyPreset preset;
  TargetFunction function;
  NoisySamples samples;
};

/// Function and noise streams are derived from `seed` so the case can be
/// regenerated in isolation.
Case make_case(const DifficultyPreset& preset, std::uint64_t seed);

}  // namespace glopt
