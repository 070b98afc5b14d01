#pragma once

// The semicircle law on [-2, 2] and exact 1-D Wasserstein distances.
//
// W1 between two one-dimensional measures equals the L1 distance between
// their CDFs.  Against the semicircle law this is computed in closed form
// per CDF plateau of the empirical measure, using the antiderivative of the
// semicircle CDF; no quadrature error beyond the quantile root-finding
// tolerance (driven to ~1e-14 by bisection).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace rmtlab {

inline constexpr double kPi = 3.14159265358979323846;

// Density (2*pi)^{-1} * sqrt((4 - x^2)_+).
inline double semicircle_density(double x) {
  const double t = 4.0 - x * x;
  return t > 0.0 ? std::sqrt(t) / (2.0 * kPi) : 0.0;
}

// CDF, clamped to [0,1] outside the support.
inline double semicircle_cdf(double x) {
  if (x <= -2.0) return 0.0;
  if (x >= 2.0) return 1.0;
  return 0.5 + x * std::sqrt(4.0 - x * x) / (4.0 * kPi) + std::asin(0.5 * x) / kPi;
}

// Antiderivative of the CDF with G(-2) = 0:
//   G(t) = t*F(t) + (4 - t^2)^{3/2} / (6*pi)  on [-2, 2],
// extended linearly by G(t) = G(2) + (t - 2) above the support.
inline double semicircle_cdf_integral(double t) {
  if (t <= -2.0) return 0.0;
  if (t >= 2.0) return 2.0 + (t - 2.0);
  const double s = 4.0 - t * t;
  return t * semicircle_cdf(t) + s * std::sqrt(s) / (6.0 * kPi);
}

// Quantile by bisection; monotone CDF, ~1e-15 absolute tolerance.
inline double semicircle_quantile(double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("semicircle_quantile: q outside [0,1]");
  if (q == 0.0) return -2.0;
  if (q == 1.0) return 2.0;
  double lo = -2.0, hi = 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (semicircle_cdf(mid) < q)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-15) break;
  }
  return 0.5 * (lo + hi);
}

namespace detail {

// Integral of |F_sc(x) - q| over [a, b], splitting at the quantile of q.
inline double abs_cdf_gap_integral(double a, double b, double q) {
  if (b <= a) return 0.0;
  auto signed_part = [](double lo, double hi, double qq) {
    // integral of (F_sc - qq) over [lo, hi]
    return semicircle_cdf_integral(hi) - semicircle_cdf_integral(lo) - qq * (hi - lo);
  };
  const double xq = q <= 0.0 ? -2.0 : (q >= 1.0 ? 2.0 : semicircle_quantile(q));
  if (xq <= a) return signed_part(a, b, q);           // F >= q throughout
  if (xq >= b) return -signed_part(a, b, q);          // F <= q throughout
  return -signed_part(a, xq, q) + signed_part(xq, b, q);
}

}  // namespace detail

// Exact W1 between the empirical measure on the given atoms (each mass 1/n)
// and the semicircle law.  Atoms need not be sorted.
inline double w1_to_semicircle(std::vector<double> atoms) {
  if (atoms.empty()) throw std::invalid_argument("w1_to_semicircle: empty sample");
  std::sort(atoms.begin(), atoms.end());
  const std::size_t n = atoms.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  // Plateau q = 0 from the lower support edge to the first atom.
  total += detail::abs_cdf_gap_integral(std::min(atoms.front(), -2.0), atoms.front(), 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i)
    total += detail::abs_cdf_gap_integral(atoms[i], atoms[i + 1],
                                          static_cast<double>(i + 1) * inv_n);
  total += detail::abs_cdf_gap_integral(atoms.back(), std::max(atoms.back(), 2.0), 1.0);
  return total;
}

// Exact W1 between two empirical measures (possibly different sizes):
// integral of the absolute CDF difference over the merged breakpoints.
inline double w1_empirical(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("w1_empirical: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double total = 0.0;
  double prev = std::min(a.front(), b.front());
  while (i < a.size() || j < b.size()) {
    double x;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j]))
      x = a[i];
    else
      x = b[j];
    total += std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (x - prev);
    prev = x;
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
  }
  return total;
}

}  // namespace rmtlab
