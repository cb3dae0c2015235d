#include "glopt/spline.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "glopt/errors.hpp"

namespace glopt {

namespace {

void check_domain(double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::domain_error("spline evaluated outside [0, 1] at x = " + std::to_string(x));
  }
}

// Non-zero basis values on `span` (Piegl & Tiller A2.2).
std::array<double, kOrder> basis_funs(std::span<const double> u, std::size_t span, double x) {
  std::array<double, kOrder> n{};
  std::array<double, kOrder> left{};
  std::array<double, kOrder> right{};
  n[0] = 1.0;
  for (int j = 1; j <= kDegree; ++j) {
    left[j] = x - u[span + 1 - j];
    right[j] = u[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    n[j] = saved;
  }
  return n;
}

// de Boor's algorithm in interpolation form d + a (d' - d), so equal
// neighbouring coefficients reproduce exactly (a constant stays constant).
double de_boor(std::span<const double> u, std::span<const double> c, std::size_t span, double x) {
  std::array<double, kOrder> d{};
  for (int j = 0; j < kOrder; ++j) d[j] = c[span - kDegree + j];
  for (int r = 1; r <= kDegree; ++r) {
    for (int j = kDegree; j >= r; --j) {
      const double lo = u[span - kDegree + j];
      const double alpha = (x - lo) / (u[span + 1 + j - r] - lo);
      d[j] = d[j - 1] + alpha * (d[j] - d[j - 1]);
    }
  }
  return d[kDegree];
}

double cox_de_boor(std::span<const double> u, std::size_t i, int p, double x, std::size_t last_span) {
  if (p == 0) {
    if (u[i] <= x && x < u[i + 1]) return 1.0;
    return (x == u.back() && i == last_span) ? 1.0 : 0.0;
  }
  double value = 0.0;
  const double d1 = u[i + p] - u[i];
  if (d1 > 0.0) value += (x - u[i]) / d1 * cox_de_boor(u, i, p - 1, x, last_span);
  const double d2 = u[i + p + 1] - u[i + 1];
  if (d2 > 0.0) value += (u[i + p + 1] - x) / d2 * cox_de_boor(u, i + 1, p - 1, x, last_span);
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------
// KnotVector

KnotVector::KnotVector(std::span<const double> interior) {
  knots_.reserve(interior.size() + 2 * kOrder);
  knots_.insert(knots_.end(), kOrder, 0.0);
  double prev = 0.0;
  for (const double k : interior) {
    if (!(k > 0.0 && k < 1.0)) {
      throw std::invalid_argument("interior knot " + std::to_string(k) + " not strictly inside (0, 1)");
    }
    if (k < prev) throw std::invalid_argument("knots must be non-decreasing");
    knots_.push_back(k);
    prev = k;
  }
  knots_.insert(knots_.end(), kOrder, 1.0);
}

KnotVector KnotVector::uniform(std::size_t intervals) {
  if (intervals == 0) throw std::invalid_argument("uniform knot vector needs at least one interval");
  std::vector<double> interior;
  interior.reserve(intervals - 1);
  for (std::size_t j = 1; j < intervals; ++j) {
    interior.push_back(static_cast<double>(j) / static_cast<double>(intervals));
  }
  return KnotVector(interior);
}

std::size_t KnotVector::find_span(double x) const {
  const std::size_t last = num_basis() - 1;
  if (x >= knots_[num_basis()]) return last;
  if (x <= knots_[kDegree]) return kDegree;
  const auto it = std::upper_bound(knots_.begin() + kDegree, knots_.begin() + num_basis() + 1, x);
  const auto span = static_cast<std::size_t>(it - knots_.begin()) - 1;
  return std::clamp<std::size_t>(span, kDegree, last);
}

double KnotVector::greville(std::size_t i) const {
  return (knots_[i + 1] + knots_[i + 2] + knots_[i + 3]) / 3.0;
}

// ---------------------------------------------------------------------------
// Basis evaluation

double bspline_basis(std::size_t i, const KnotVector& knots, double x) {
  if (i >= knots.num_basis()) {
    throw std::invalid_argument("basis index " + std::to_string(i) + " out of range (" +
                                std::to_string(knots.num_basis()) + " basis functions)");
  }
  check_domain(x);
  return cox_de_boor(knots.knots(), i, kDegree, x, knots.find_span(1.0));
}

BasisDerivs basis_derivs(const KnotVector& knots, std::size_t span, double x, int max_order) {
  // Piegl & Tiller A2.3.
  const auto u = knots.knots();
  constexpr int p = kDegree;
  max_order = std::clamp(max_order, 0, p);
  double ndu[kOrder][kOrder];
  double left[kOrder];
  double right[kOrder];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - u[span + 1 - j];
    right[j] = u[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }

  BasisDerivs ders{};
  for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];

  double a[2][kOrder];
  for (int r = 0; r <= p; ++r) {
    int s1 = 0;
    int s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= max_order; ++k) {
      double d = 0.0;
      const int rk = r - k;
      const int pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  int factor = p;
  for (int k = 1; k <= max_order; ++k) {
    for (int j = 0; j <= p; ++j) ders[k][j] *= factor;
    factor *= (p - k);
  }
  return ders;
}

// ---------------------------------------------------------------------------
// BSpline

BSpline::BSpline(KnotVector knots, std::vector<double> coeffs)
    : knots_(std::move(knots)), coeffs_(std::move(coeffs)) {
  if (coeffs_.size() != knots_.num_basis()) {
    throw std::invalid_argument("coefficient count " + std::to_string(coeffs_.size()) +
                                " does not match basis count " + std::to_string(knots_.num_basis()));
  }
}

double BSpline::eval(double x) const {
  check_domain(x);
  return de_boor(knots_.knots(), coeffs_, knots_.find_span(x), x);
}

double BSpline::derivative(double x, int order) const {
  check_domain(x);
  if (order < 0) throw std::invalid_argument("negative derivative order");
  if (order > kDegree) return 0.0;
  const std::size_t span = knots_.find_span(x);
  const auto ders = basis_derivs(knots_, span, x, order);
  double value = 0.0;
  for (int j = 0; j < kOrder; ++j) value += ders[order][j] * coeffs_[span - kDegree + j];
  return value;
}

std::vector<double> BSpline::eval_grid(std::size_t count) const {
  std::vector<double> out(count + 1);
  const auto u = knots_.knots();
  const std::size_t last = knots_.num_basis() - 1;
  std::size_t span = kDegree;
  for (std::size_t k = 0; k <= count; ++k) {
    const double x = static_cast<double>(k) / static_cast<double>(count);
    while (span < last && x >= u[span + 1]) ++span;
    out[k] = de_boor(u, coeffs_, span, x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fitting

GridSpec::GridSpec(std::size_t intervals) : count(intervals) {
  if (intervals < 2) throw std::invalid_argument("grid needs at least 2 intervals");
}

SplineFit fit_interpolating_spline(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = xs.size();
  if (ys.size() != n) throw std::invalid_argument("xs and ys differ in length");
  if (n < 4) {
    throw TooFewSamplesError("cubic interpolation needs at least 4 samples, got " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xs[i] >= 0.0 && xs[i] <= 1.0)) throw std::invalid_argument("sample position outside [0, 1]");
    if (!std::isfinite(ys[i])) throw std::invalid_argument("non-finite sample value");
    if (i > 0 && !(xs[i] > xs[i - 1])) {
      throw std::invalid_argument("sample positions must be strictly increasing");
    }
  }

  KnotVector knots(xs.subspan(1, n - 2));
  const auto u = knots.knots();
  const auto dim = static_cast<lapack_int>(n + 2);

  // Row order: x_0, not-a-knot(first interior knot), x_1..x_{n-2},
  // not-a-knot(last interior knot), x_{n-1}. Keeps the band narrow.
  std::vector<double> dense(static_cast<std::size_t>(dim) * dim, 0.0);
  std::vector<double> rhs(static_cast<std::size_t>(dim), 0.0);
  auto at = [&](std::size_t r, std::size_t c) -> double& { return dense[r * dim + c]; };

  // Solving for c - ys[0] keeps constant data exact: the right-hand side is
  // then identically zero.
  const double offset = ys[0];
  auto interp_row = [&](std::size_t row, std::size_t sample) {
    const std::size_t span = knots.find_span(xs[sample]);
    const auto nb = basis_funs(u, span, xs[sample]);
    for (int j = 0; j < kOrder; ++j) at(row, span - kDegree + j) = nb[j];
    rhs[row] = ys[sample] - offset;
  };
  // Jump of the third derivative across knot index k, scaled by the local
  // spacing cubed so the row is O(1) like the interpolation rows.
  auto not_a_knot_row = [&](std::size_t row, std::size_t k) {
    const double h = 0.5 * (u[k + 1] - u[k - 1]);
    const double scale = h * h * h;
    const auto right = basis_derivs(knots, k, u[k], 3);
    const auto left = basis_derivs(knots, k - 1, u[k], 3);
    for (int j = 0; j < kOrder; ++j) {
      at(row, k - kDegree + j) += scale * right[3][j];
      at(row, k - 1 - kDegree + j) -= scale * left[3][j];
    }
  };

  std::size_t row = 0;
  interp_row(row++, 0);
  not_a_knot_row(row++, kOrder);
  for (std::size_t s = 1; s + 1 < n; ++s) interp_row(row++, s);
  not_a_knot_row(row++, n + 1);
  interp_row(row++, n - 1);

  int kl = 0;
  int ku = 0;
  for (lapack_int r = 0; r < dim; ++r) {
    for (lapack_int c = 0; c < dim; ++c) {
      if (at(r, c) != 0.0) {
        kl = std::max(kl, static_cast<int>(r - c));
        ku = std::max(ku, static_cast<int>(c - r));
      }
    }
  }

  const lapack_int ldab = 2 * kl + ku + 1;
  std::vector<double> band(static_cast<std::size_t>(ldab) * dim, 0.0);
  double anorm = 0.0;
  for (lapack_int c = 0; c < dim; ++c) {
    double col_sum = 0.0;
    for (lapack_int r = std::max<lapack_int>(0, c - ku); r <= std::min<lapack_int>(dim - 1, c + kl); ++r) {
      band[(kl + ku + r - c) + c * ldab] = at(r, c);
      col_sum += std::abs(at(r, c));
    }
    anorm = std::max(anorm, col_sum);
  }

  std::vector<lapack_int> ipiv(static_cast<std::size_t>(dim));
  lapack_int info = LAPACKE_dgbtrf(LAPACK_COL_MAJOR, dim, dim, kl, ku, band.data(), ldab, ipiv.data());
  if (info != 0) throw ConditionError("interpolation system is singular (dgbtrf info " + std::to_string(info) + ")");
  double rcond = 0.0;
  info = LAPACKE_dgbcon(LAPACK_COL_MAJOR, '1', dim, kl, ku, band.data(), ldab, ipiv.data(), anorm, &rcond);
  if (info != 0 || !(rcond > 1e-13)) {
    throw ConditionError("interpolation system ill-conditioned (rcond " + std::to_string(rcond) + ")");
  }
  info = LAPACKE_dgbtrs(LAPACK_COL_MAJOR, 'N', dim, kl, ku, 1, band.data(), ldab, ipiv.data(), rhs.data(), dim);
  if (info != 0) throw ConditionError("banded solve failed (dgbtrs info " + std::to_string(info) + ")");
  for (double& c : rhs) {
    c += offset;
    if (!std::isfinite(c)) throw ConditionError("interpolation produced non-finite coefficients");
  }

  return SplineFit{BSpline(std::move(knots), std::move(rhs)), n};
}

double spline_eval(const SplineFit& fit, double x) { return fit.curve.eval(x); }

std::vector<double> spline_derivative_at(const SplineFit& fit, std::span<const double> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const double x : xs) out.push_back(fit.curve.derivative(x, 1));
  return out;
}

std::size_t argmin_index(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmin of an empty range");
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] < values[best]) best = k;
  }
  return best;
}

double spline_argmin(const SplineFit& fit, const GridSpec& grid) {
  if (grid.count < 2) throw std::invalid_argument("grid needs at least 2 intervals");
  const auto values = fit.curve.eval_grid(grid.count);
  return grid.point(argmin_index(values));
}

}  // namespace glopt
