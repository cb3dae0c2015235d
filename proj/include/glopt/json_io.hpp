#pragma once

// JSON forms of configs and case files.
//
// Case file: {"format": "glopt-case", "version": 1, "seed", "preset": {...},
//   "knots": [...], "coeffs": [...], "argmin_true", "value_range",
//   "attempts", "xs": [...], "ys": [...], "sigma"}.
// Seeds are written as decimal strings so 64-bit values survive JSON
// readers that parse numbers as doubles.

#include "glopt/funcgen.hpp"
#include "glopt/model.hpp"
#include "glopt/trainer.hpp"
#include "json.hpp"

namespace glopt {

using Json = nlohmann::ordered_json;

Json to_json(const DifficultyPreset& p);
DifficultyPreset preset_from_json(const Json& j);

Json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const Json& j);

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

Json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const Json& j);

Json to_json(const Case& c);
Case case_from_json(const Json& j);

Json to_json(const Trajectory& t);

std::string seed_to_string(std::uint64_t seed);
/// Accepts a decimal string or a non-negative JSON integer.
std::uint64_t seed_from_json(const Json& j);

}  // namespace glopt
