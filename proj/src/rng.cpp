#include "glopt/rng.hpp"

#include <cmath>
#include <numbers>

namespace glopt {

double CounterRng::normal() noexcept {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

std::uint64_t hash_tag(std::string_view tag) noexcept {
  // FNV-1a, then finalised.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return CounterRng::mix64(h);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index) noexcept {
  std::uint64_t z = CounterRng::mix64(parent ^ hash_tag(tag));
  z = CounterRng::mix64(z + (index + 1) * CounterRng::kGolden);
  return z;
}

std::uint64_t case_seed(std::uint64_t run_seed, SeedDomain domain, std::uint64_t index) noexcept {
  constexpr std::uint64_t kTopBit = 1ULL << 63;
  const std::uint64_t raw = derive_seed(run_seed, "case", index);
  return domain == SeedDomain::kTraining ? (raw & ~kTopBit) : (raw | kTopBit);
}

}  // namespace glopt
