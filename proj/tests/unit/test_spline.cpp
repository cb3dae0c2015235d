#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "glopt/errors.hpp"
#include "glopt/spline.hpp"

namespace glopt {
namespace {

// Independent Cox-de Boor table over a full knot vector: the classic
// bottom-up triangle with half-open spans and 0/0 := 0. x == 1 is moved to
// the last non-empty span by hand.
std::vector<double> brute_cox_de_boor(const std::vector<double>& t, double x) {
  const std::size_t m = t.size();
  std::vector<double> n0(m - 1, 0.0);
  std::size_t last = 0;
  for (std::size_t j = 0; j + 1 < m; ++j) {
    if (t[j] < t[j + 1]) last = j;
  }
  for (std::size_t j = 0; j + 1 < m; ++j) {
    if (x == 1.0) {
      n0[j] = (j == last) ? 1.0 : 0.0;
    } else {
      n0[j] = (t[j] <= x && x < t[j + 1]) ? 1.0 : 0.0;
    }
  }
  std::vector<double> prev = n0;
  for (int p = 1; p <= 3; ++p) {
    std::vector<double> cur(m - 1 - p, 0.0);
    for (std::size_t j = 0; j < cur.size(); ++j) {
      double a = 0.0, b = 0.0;
      const double d1 = t[j + p] - t[j];
      const double d2 = t[j + p + 1] - t[j + 1];
      if (d1 > 0.0) a = (x - t[j]) / d1 * prev[j];
      if (d2 > 0.0) b = (t[j + p + 1] - x) / d2 * prev[j + 1];
      cur[j] = a + b;
    }
    prev = cur;
  }
  return prev;
}

// Uniform cardinal cubic B-spline on [0, 4].
double cardinal_cubic(double u) {
  if (u < 0.0 || u >= 4.0) return 0.0;
  if (u < 1.0) return u * u * u / 6.0;
  if (u < 2.0) return (-3.0 * u * u * u + 12.0 * u * u - 12.0 * u + 4.0) / 6.0;
  if (u < 3.0) return (3.0 * u * u * u - 24.0 * u * u + 60.0 * u - 44.0) / 6.0;
  return (4.0 - u) * (4.0 - u) * (4.0 - u) / 6.0;
}

KnotVector random_knots(std::mt19937_64& gen, int n_interior) {
  std::uniform_real_distribution<double> u(0.001, 0.999);
  std::vector<double> interior(static_cast<std::size_t>(n_interior));
  for (auto& v : interior) v = u(gen);
  std::sort(interior.begin(), interior.end());
  return KnotVector(interior);
}

std::vector<double> sorted_uniform(std::mt19937_64& gen, std::size_t n) {
  // Jittered grid with fixed endpoints; strictly increasing.
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = static_cast<double>(i) / static_cast<double>(n - 1);
    if (i > 0 && i + 1 < n) xs[i] += u(gen) / static_cast<double>(n - 1);
  }
  return xs;
}

TEST(KnotVector, ClampedStructure) {
  const auto k = KnotVector::uniform(5);
  ASSERT_EQ(k.size(), 4u + 4u + 4u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(k[static_cast<std::size_t>(i)], 0.0);
    EXPECT_EQ(k[k.size() - 1 - static_cast<std::size_t>(i)], 1.0);
  }
  EXPECT_EQ(k.num_basis(), 8u);
}

TEST(KnotVector, RejectsInvalidInterior) {
  const std::vector<double> unsorted{0.5, 0.2};
  const std::vector<double> boundary{0.0, 0.5};
  EXPECT_THROW(KnotVector{unsorted}, std::invalid_argument);
  EXPECT_THROW(KnotVector{boundary}, std::invalid_argument);
}

TEST(BSplineBasis, PartitionOfUnity) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto knots = random_knots(gen, 3 + trial * 3);
    for (int s = 0; s < 1000; ++s) {
      const double x = u(gen);
      double total = 0.0;
      for (std::size_t i = 0; i < knots.num_basis(); ++i) total += bspline_basis(i, knots, x);
      ASSERT_NEAR(total, 1.0, 1e-12) << "x=" << x;
    }
  }
}

TEST(BSplineBasis, LocalSupportAndNonNegativity) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto knots = random_knots(gen, 12);
  for (int s = 0; s < 2000; ++s) {
    const double x = u(gen);
    for (std::size_t i = 0; i < knots.num_basis(); ++i) {
      const double b = bspline_basis(i, knots, x);
      EXPECT_GE(b, 0.0);
      if (x < knots[i] || x > knots[i + 4]) EXPECT_EQ(b, 0.0);
    }
  }
}

TEST(BSplineBasis, ClampedEndpointInterpolation) {
  const auto knots = KnotVector::uniform(1);
  ASSERT_EQ(knots.num_basis(), 4u);
  EXPECT_EQ(bspline_basis(0, knots, 0.0), 1.0);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_EQ(bspline_basis(i, knots, 0.0), 0.0);
  EXPECT_EQ(bspline_basis(3, knots, 1.0), 1.0);
}

TEST(BSplineBasis, MatchesCardinalFormulaOnUniformKnots) {
  // Spacing 0.1; basis 5 has support [0.2, 0.6], fully interior.
  const auto knots = KnotVector::uniform(10);
  const double x = 0.25;
  EXPECT_NEAR(bspline_basis(5, knots, x), cardinal_cubic((x - 0.2) / 0.1), 1e-14);
  EXPECT_NEAR(bspline_basis(5, knots, x), 1.0 / 48.0, 1e-14);
  for (std::size_t i = 4; i <= 9; ++i) {
    const double start = knots[i];
    for (double xx : {0.31, 0.47, 0.5, 0.555, 0.6}) {
      EXPECT_NEAR(bspline_basis(i, knots, xx), cardinal_cubic((xx - start) / 0.1), 1e-13);
    }
  }
}

TEST(BSplineBasis, MatchesBruteForceTableOnRandomKnots) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto knots = random_knots(gen, 7);
    const std::vector<double> t(knots.knots().begin(), knots.knots().end());
    for (int s = 0; s < 50; ++s) {
      const double x = (s == 0) ? 1.0 : (s == 1 ? 0.0 : u(gen));
      const auto ref = brute_cox_de_boor(t, x);
      for (std::size_t i = 0; i < knots.num_basis(); ++i) {
        ASSERT_NEAR(bspline_basis(i, knots, x), ref[i], 1e-13) << "i=" << i << " x=" << x;
      }
    }
  }
}

TEST(BSplineBasis, RejectsBadArguments) {
  const auto knots = KnotVector::uniform(4);
  EXPECT_THROW(bspline_basis(knots.num_basis(), knots, 0.5), std::invalid_argument);
  EXPECT_THROW(bspline_basis(0, knots, -0.1), std::domain_error);
  EXPECT_THROW(bspline_basis(0, knots, 1.1), std::domain_error);
}

TEST(BSpline, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::normal_distribution<double> nrm;
  const auto knots = random_knots(gen, 9);
  std::vector<double> c(knots.num_basis());
  for (auto& v : c) v = nrm(gen);
  const BSpline f(knots, c);
  for (int s = 0; s < 100; ++s) {
    const double x = u(gen);
    const double h = 1e-6;
    EXPECT_NEAR(f.derivative(x, 1), (f.eval(x + h) - f.eval(x - h)) / (2 * h), 1e-4 * (1 + std::abs(f.derivative(x))));
  }
}

TEST(BSpline, EvalGridMatchesPointwise) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nrm;
  const auto knots = random_knots(gen, 15);
  std::vector<double> c(knots.num_basis());
  for (auto& v : c) v = nrm(gen);
  const BSpline f(knots, c);
  const auto grid = f.eval_grid(2000);
  ASSERT_EQ(grid.size(), 2001u);
  for (std::size_t k = 0; k <= 2000; ++k) {
    ASSERT_NEAR(grid[k], f.eval(static_cast<double>(k) / 2000.0), 1e-12);
  }
}

TEST(FitInterpolatingSpline, ReproducesConstant) {
  std::mt19937_64 gen(6);
  const auto xs = sorted_uniform(gen, 12);
  const std::vector<double> ys(xs.size(), 5.0);
  const auto fit = fit_interpolating_spline(xs, ys);
  EXPECT_EQ(fit.coeffs().size(), xs.size() + 2);
  EXPECT_EQ(fit.source_n, xs.size());
  for (int k = 0; k <= 100; ++k) EXPECT_NEAR(spline_eval(fit, k / 100.0), 5.0, 1e-9);
}

TEST(FitInterpolatingSpline, ReproducesLinearAndCubic) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto xs = sorted_uniform(gen, 40);
  auto cubic = [](double x) { return 3.0 * x * x * x - 2.0 * x * x + 0.5 * x + 1.0; };
  std::vector<double> lin(xs.size()), cub(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    lin[i] = 2.0 * xs[i] + 1.0;
    cub[i] = cubic(xs[i]);
  }
  const auto fl = fit_interpolating_spline(xs, lin);
  const auto fc = fit_interpolating_spline(xs, cub);
  for (int s = 0; s < 100; ++s) {
    const double x = u(gen);
    EXPECT_NEAR(spline_eval(fl, x), 2.0 * x + 1.0, 1e-9);
    EXPECT_NEAR(spline_eval(fc, x), cubic(x), 1e-9);
  }
  // Not-a-knot reproduces the cubic on four points too (no interior DOF left).
  const std::vector<double> x4{0.0, 0.3, 0.7, 1.0};
  std::vector<double> y4;
  for (double x : x4) y4.push_back(cubic(x));
  const auto f4 = fit_interpolating_spline(x4, y4);
  for (int k = 0; k <= 20; ++k) EXPECT_NEAR(spline_eval(f4, k / 20.0), cubic(k / 20.0), 1e-9);
}

TEST(FitInterpolatingSpline, KnotMidpointsMatchPolynomialExpansion) {
  const std::vector<double> xs{0.0, 0.2, 0.45, 0.6, 0.8, 1.0};
  auto p = [](double x) { return -1.5 * x * x * x + x * x - 0.25; };
  std::vector<double> ys;
  for (double x : xs) ys.push_back(p(x));
  const auto fit = fit_interpolating_spline(xs, ys);
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double mid = 0.5 * (xs[i] + xs[i + 1]);
    EXPECT_NEAR(spline_eval(fit, mid), p(mid), 1e-12);
  }
}

TEST(FitInterpolatingSpline, InterpolatesRandomData) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nrm;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 4 + static_cast<std::size_t>(trial);
    const auto xs = sorted_uniform(gen, n);
    std::vector<double> ys(n);
    for (auto& y : ys) y = nrm(gen);
    const auto fit = fit_interpolating_spline(xs, ys);
    for (std::size_t j = 0; j < n; ++j) ASSERT_NEAR(spline_eval(fit, xs[j]), ys[j], 1e-9) << "n=" << n;
  }
}

TEST(FitInterpolatingSpline, SineAccuracyAgainstDenseOracle) {
  std::vector<double> xs(40), ys(40);
  for (std::size_t i = 0; i < 40; ++i) {
    xs[i] = static_cast<double>(i) / 39.0;
    ys[i] = std::sin(6.0 * xs[i]);
  }
  const auto fit = fit_interpolating_spline(xs, ys);
  double worst = 0.0;
  for (int k = 0; k <= 20000; ++k) {
    const double x = k / 20000.0;
    worst = std::max(worst, std::abs(spline_eval(fit, x) - std::sin(6.0 * x)));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(FitInterpolatingSpline, RejectsBadInput) {
  const std::vector<double> ys4{1, 2, 3, 4};
  EXPECT_THROW(fit_interpolating_spline(std::vector<double>{0.0, 0.5, 0.5, 1.0}, ys4), std::invalid_argument);
  EXPECT_THROW(fit_interpolating_spline(std::vector<double>{0.0, 0.6, 0.5, 1.0}, ys4), std::invalid_argument);
  EXPECT_THROW(fit_interpolating_spline(std::vector<double>{0.0, 0.5, 1.0}, std::vector<double>{1, 2, 3}),
               TooFewSamplesError);
  EXPECT_THROW(fit_interpolating_spline(std::vector<double>{0.0, 0.5, 0.7, 1.2}, ys4), std::invalid_argument);
}

TEST(SplineEval, DomainChecked) {
  const std::vector<double> xs{0.0, 0.3, 0.6, 1.0}, ys{1, 0, 1, 0};
  const auto fit = fit_interpolating_spline(xs, ys);
  EXPECT_THROW(spline_eval(fit, -1e-9), std::domain_error);
  EXPECT_THROW(spline_eval(fit, 1.0 + 1e-9), std::domain_error);
}

TEST(SplineDerivative, ConstantLinearAndSine) {
  std::vector<double> xs(40), c(40), lin(40), sn(40);
  for (std::size_t i = 0; i < 40; ++i) {
    xs[i] = static_cast<double>(i) / 39.0;
    c[i] = -2.0;
    lin[i] = 2.0 * xs[i] + 1.0;
    sn[i] = std::sin(6.0 * xs[i]);
  }
  for (double d : spline_derivative_at(fit_interpolating_spline(xs, c), xs)) EXPECT_NEAR(d, 0.0, 1e-8);
  for (double d : spline_derivative_at(fit_interpolating_spline(xs, lin), xs)) EXPECT_NEAR(d, 2.0, 1e-8);
  const auto fit = fit_interpolating_spline(xs, sn);
  const double h = 1e-6;
  const double fd = (spline_eval(fit, 0.5 + h) - spline_eval(fit, 0.5 - h)) / (2 * h);
  const std::vector<double> at{0.5};
  const double d = spline_derivative_at(fit, at)[0];
  EXPECT_NEAR(d, fd, 1e-4);
  EXPECT_NEAR(d, 6.0 * std::cos(3.0), 1e-3);
}

TEST(SplineDerivative, AgreesWithCentralDifferencesOnNoisyFits) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> nrm;
  std::uniform_real_distribution<double> u(1e-5, 1.0 - 1e-5);
  const auto xs = sorted_uniform(gen, 40);
  std::vector<double> ys(40);
  for (auto& y : ys) y = nrm(gen);
  const auto fit = fit_interpolating_spline(xs, ys);
  std::vector<double> probes(100);
  for (auto& p : probes) p = u(gen);
  const auto d = spline_derivative_at(fit, probes);
  const double h = 1e-6;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const double fd = (spline_eval(fit, probes[i] + h) - spline_eval(fit, probes[i] - h)) / (2 * h);
    EXPECT_NEAR(d[i], fd, 1e-4);
  }
}

TEST(SplineArgmin, ConvexQuadratic) {
  std::vector<double> xs(40), ys(40);
  for (std::size_t i = 0; i < 40; ++i) {
    xs[i] = static_cast<double>(i) / 39.0;
    ys[i] = (xs[i] - 0.3) * (xs[i] - 0.3);
  }
  EXPECT_NEAR(spline_argmin(fit_interpolating_spline(xs, ys), GridSpec(2000)), 0.3, 5e-4);
}

TEST(SplineArgmin, ConstantTiesGoToZero) {
  const std::vector<double> xs{0.0, 0.25, 0.5, 0.75, 1.0}, ys{3, 3, 3, 3, 3};
  EXPECT_EQ(spline_argmin(fit_interpolating_spline(xs, ys), GridSpec(2000)), 0.0);
}

TEST(SplineArgmin, TwoWellMatchesDenseScan) {
  auto f = [](double x) {
    return 4.0 * (x - 0.2) * (x - 0.2) * (x - 0.8) * (x - 0.8) - 0.1 * (x - 0.8);
  };
  std::vector<double> xs(40), ys(40);
  for (std::size_t i = 0; i < 40; ++i) {
    xs[i] = static_cast<double>(i) / 39.0;
    ys[i] = f(xs[i]);
  }
  const auto fit = fit_interpolating_spline(xs, ys);
  const double am = spline_argmin(fit, GridSpec(2000));
  double best_x = 0.0, best_v = spline_eval(fit, 0.0);
  for (int k = 1; k <= 1000000; ++k) {
    const double x = k / 1e6;
    const double v = spline_eval(fit, x);
    if (v < best_v) {
      best_v = v;
      best_x = x;
    }
  }
  EXPECT_GT(am, 0.5);
  EXPECT_NEAR(am, best_x, 1.0 / 2000.0);
}

TEST(SplineArgmin, DeterministicBitForBit) {
  std::mt19937_64 gen(10);
  std::normal_distribution<double> nrm;
  const auto xs = sorted_uniform(gen, 40);
  std::vector<double> ys(40);
  for (auto& y : ys) y = nrm(gen);
  const double a = spline_argmin(fit_interpolating_spline(xs, ys), GridSpec(2000));
  const double b = spline_argmin(fit_interpolating_spline(xs, ys), GridSpec(2000));
  EXPECT_EQ(std::bit_cast<std::uint64_t>(a), std::bit_cast<std::uint64_t>(b));
}

TEST(GridSpec, RequiresTwoIntervals) {
  EXPECT_THROW(GridSpec(1), std::invalid_argument);
  const GridSpec g(2000);
  EXPECT_EQ(g.size(), 2001u);
  EXPECT_EQ(g.point(0), 0.0);
  EXPECT_EQ(g.point(2000), 1.0);
}

TEST(ArgminIndex, FirstOccurrenceWins) {
  const std::vector<double> v{3.0, 1.0, 2.0, 1.0};
  EXPECT_EQ(argmin_index(v), 1u);
}

}  // namespace
}  // namespace glopt
