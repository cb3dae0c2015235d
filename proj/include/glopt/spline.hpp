#pragma once

// Cubic B-splines on [0, 1]: basis evaluation, not-a-knot interpolation and
// grid-search minimisation.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace glopt {

inline constexpr int kDegree = 3;
inline constexpr int kOrder = kDegree + 1;

/// Clamped knot vector on [0, 1] for cubic splines.
///
/// Invariants (checked on construction): non-decreasing, the first four knots
/// are 0, the last four are 1, every interior knot lies strictly in (0, 1).
class KnotVector {
 public:
  KnotVector() = default;

  /// Builds [0,0,0,0, interior..., 1,1,1,1].
  explicit KnotVector(std::span<const double> interior);

  /// Clamped knots with `intervals` equal spans.
  static KnotVector uniform(std::size_t intervals);

  std::span<const double> knots() const noexcept { return knots_; }
  double operator[](std::size_t i) const noexcept { return knots_[i]; }
  std::size_t size() const noexcept { return knots_.size(); }
  std::size_t num_basis() const noexcept { return knots_.size() - kOrder; }

  /// Index s with knots[s] <= x < knots[s+1], restricted to non-empty spans;
  /// x == 1 maps to the last non-empty span.
  std::size_t find_span(double x) const;

  /// Greville abscissa of basis i: mean of knots i+1..i+3.
  double greville(std::size_t i) const;

 private:
  std::vector<double> knots_;
};

/// Cubic B-spline curve: f(x) = sum_i c_i B_{i,3}(x).
class BSpline {
 public:
  BSpline() = default;
  BSpline(KnotVector knots, std::vector<double> coeffs);

  const KnotVector& knots() const noexcept { return knots_; }
  std::span<const double> coeffs() const noexcept { return coeffs_; }

  double eval(double x) const;
  double derivative(double x, int order = 1) const;

  /// Values at x_k = k / count for k = 0..count.
  std::vector<double> eval_grid(std::size_t count) const;

 private:
  KnotVector knots_;
  std::vector<double> coeffs_;
};

struct SplineFit {
  BSpline curve;
  std::size_t source_n = 0;

  std::span<const double> coeffs() const noexcept { return curve.coeffs(); }
  const KnotVector& knots() const noexcept { return curve.knots(); }
};

/// Search grid {0, 1/count, ..., 1}.
struct GridSpec {
  std::size_t count = 2000;

  GridSpec() = default;
  explicit GridSpec(std::size_t intervals);

  double point(std::size_t k) const noexcept {
    return static_cast<double>(k) / static_cast<double>(count);
  }
  std::size_t size() const noexcept { return count + 1; }
};

/// B_{i,3}(x) by the Cox-de Boor recurrence. x == 1 is treated as lying in
/// the last non-empty span so the clamped end basis evaluates to 1 there.
/// Throws std::invalid_argument for i out of range, std::domain_error for x
/// outside [0, 1].
double bspline_basis(std::size_t i, const KnotVector& knots, double x);

/// Values and derivatives (orders 0..3) of the four basis functions that are
/// non-zero on `span`, evaluated at x. ders[k][j] is the k-th derivative of
/// basis span-3+j.
using BasisDerivs = std::array<std::array<double, kOrder>, kOrder>;
BasisDerivs basis_derivs(const KnotVector& knots, std::size_t span, double x, int max_order);

/// Not-a-knot interpolating cubic. Knots sit at the interior samples
/// xs[1..n-2], giving n + 2 coefficients; the two extra rows force third
/// derivative continuity at the first and last interior knot.
/// Throws std::invalid_argument on unsorted/duplicate/out-of-range xs,
/// TooFewSamplesError when n < 4, ConditionError if the solve is unreliable.
SplineFit fit_interpolating_spline(std::span<const double> xs, std::span<const double> ys);

/// Throws std::domain_error outside [0, 1].
double spline_eval(const SplineFit& fit, double x);

std::vector<double> spline_derivative_at(const SplineFit& fit, std::span<const double> xs);

/// Grid point with the smallest value; ties go to the smallest x.
double spline_argmin(const SplineFit& fit, const GridSpec& grid);

/// Index of the smallest value, first occurrence wins.
std::size_t argmin_index(std::span<const double> values);

}  // namespace glopt
