#pragma once

#include <cstdint>
#include <string_view>

namespace glopt {

/// Counter-based 64-bit generator.
///
/// Output k of a stream with key K is `mix64(K + (k + 1) * kGolden)`, i.e. the
/// SplitMix64 sequence addressed by counter. Any draw is reproducible from
/// (key, counter) alone; no hidden state beyond the counter.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  static constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes two draws per call.
  double normal() noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

/// Hierarchical seed derivation: child = mix(parent, tag, index).
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0) noexcept;

/// Seed namespaces. Training case seeds have the top bit clear, evaluation
/// case seeds have it set, so the two sets can never intersect.
enum class SeedDomain : std::uint8_t { kTraining, kEvaluation };

std::uint64_t case_seed(std::uint64_t run_seed, SeedDomain domain, std::uint64_t index) noexcept;

}  // namespace glopt
