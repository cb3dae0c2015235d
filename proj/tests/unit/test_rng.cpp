#include <gtest/gtest.h>

#include <cmath>
#include <unordered_set>

#include "glopt/rng.hpp"

namespace glopt {
namespace {

// Reference SplitMix64 written from the published algorithm, stateful form.
std::uint64_t splitmix_next(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

TEST(CounterRng, MatchesStatefulSplitMix) {
  std::uint64_t state = 12345;
  CounterRng rng(12345);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(rng.next_u64(), splitmix_next(state));
}

TEST(CounterRng, AddressableByCounter) {
  CounterRng a(99);
  for (int i = 0; i < 17; ++i) a.next_u64();
  CounterRng b(99, 17);
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(CounterRng, UniformInUnitInterval) {
  CounterRng rng(5);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(CounterRng, NormalMoments) {
  CounterRng rng(7);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    ASSERT_TRUE(std::isfinite(z));
    s1 += z;
    s2 += z * z;
  }
  const double mean = s1 / n;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(s2 / n - mean * mean, 1.0, 0.015);
}

TEST(SeedDerivation, TagsAndIndicesSeparateStreams) {
  EXPECT_NE(derive_seed(1, "function"), derive_seed(1, "noise"));
  EXPECT_NE(derive_seed(1, "case", 0), derive_seed(1, "case", 1));
  EXPECT_NE(derive_seed(1, "case", 0), derive_seed(2, "case", 0));
  EXPECT_EQ(derive_seed(3, "noise", 4), derive_seed(3, "noise", 4));
}

TEST(SeedDerivation, TrainingAndEvaluationNamespacesDisjoint) {
  // The top bit separates the domains, so a collision is impossible by
  // construction; this checks the construction over a large sample.
  std::unordered_set<std::uint64_t> train;
  train.reserve(1000000);
  for (std::uint64_t i = 0; i < 1000000; ++i) {
    const auto s = case_seed(42, SeedDomain::kTraining, i);
    ASSERT_EQ(s >> 63, 0u);
    train.insert(s);
  }
  std::size_t collisions = 0;
  for (std::uint64_t i = 0; i < 1000000; ++i) {
    const auto s = case_seed(42, SeedDomain::kEvaluation, i);
    ASSERT_EQ(s >> 63, 1u);
    collisions += train.count(s);
  }
  EXPECT_EQ(collisions, 0u);
}

}  // namespace
}  // namespace glopt
