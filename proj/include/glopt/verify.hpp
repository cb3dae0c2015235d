#pragma once

// Gradient-check suites: every autodiff primitive against central
// differences, and the trajectory loss through a short unrolled model.

#include <cstdint>
#include <string>
#include <vector>

#include "glopt/model.hpp"

namespace glopt {

inline constexpr double kPrimitiveGradTol = 1e-6;
inline constexpr double kTrajectoryGradTol = 1e-4;

struct SuiteResult {
  std::string name;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  std::size_t checked = 0;
  std::string worst;  // tensor[index] with the largest error
  bool passed() const { return max_rel_error <= threshold; }
};

/// One suite per primitive, `trials` random draws each (64-bit, eps 1e-6).
std::vector<SuiteResult> primitive_gradcheck_suites(int trials = 20, std::uint64_t seed = 1);

/// Fixed 5-sample toy problem used by the trajectory check.
ModelInputs toy_inputs();

/// Loss gradient through a `fixed_unroll`-step model on the toy problem,
/// every parameter entry checked unless `max_per_tensor` > 0.
SuiteResult trajectory_gradcheck(ModelConfig cfg, std::size_t max_per_tensor = 0, std::uint64_t init_seed = 3);

/// Primitive suites plus the 2-step trajectory suite at the given model size.
std::vector<SuiteResult> all_gradcheck_suites(const ModelConfig& trajectory_cfg, std::size_t max_per_tensor = 0);

/// Small model config for fast full-coverage trajectory checks.
ModelConfig toy_model_config();

}  // namespace glopt
