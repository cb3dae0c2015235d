#pragma once

// Binary and JSON serialization of a ParamStore.
//
// Binary layout, all integers little-endian:
//   magic    8 bytes  "GLOPTPRM"
//   version  u32      kParamFormatVersion
//   dtype    u32      1 = float32, 2 = float64
//   count    u32      number of tensors
//   count x { u32 name_len; name bytes (UTF-8); u32 rows; u32 cols }
//   manifest_checksum  u64  FNV-1a over every byte above
//   tensor data in manifest order, row-major, IEEE-754 little-endian
//   data_checksum      u64  FNV-1a over the data bytes

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glopt/autodiff.hpp"

namespace glopt {

inline constexpr std::uint32_t kParamFormatVersion = 1;

template <typename T>
std::vector<std::uint8_t> serialize_params(const ad::ParamStore<T>& store);

/// Parses `bytes` and copies the values into `store`, whose names and shapes
/// must match the manifest exactly. Nothing is written to `store` unless
/// the whole buffer validates. Float widths convert on load.
/// Throws VersionMismatchError, CorruptManifestError (bad magic, truncation,
/// checksum failure) or ShapeMismatchError naming the first offending tensor.
template <typename T>
void deserialize_params(const std::vector<std::uint8_t>& bytes, ad::ParamStore<T>& store);

template <typename T>
void save_params(const ad::ParamStore<T>& store, const std::filesystem::path& path);

template <typename T>
void load_params(const std::filesystem::path& path, ad::ParamStore<T>& store);

/// {"format_version", "dtype", "tensors": [{"name", "shape", "values"}]}.
template <typename T>
std::string params_to_json(const ad::ParamStore<T>& store, int indent = -1);

}  // namespace glopt
