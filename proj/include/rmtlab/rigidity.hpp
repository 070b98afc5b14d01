#pragma once

// Eigenvalue rigidity diagnostics: the k * mu_k envelope, inverse-power
// moments, and distance of the normalized empirical spectral measure to the
// semicircle law (exact W1 plus a grid bounded-Lipschitz distance).
//
// The grid bounded-Lipschitz value is the exact optimum of the finite LP
//   maximize  sum_i c_i f_i   over  |f_i| <= 1, |f_{i+1} - f_i| <= h,
// where f_i are nodal values of a piecewise-linear test function on a
// uniform grid over [-3, 3] and c_i are the nodal weights of mu - nu
// (empirical minus semicircle).  The LP is solved through its dual, a
// min-cost-flow on a chain:
//   minimize  sum_i |c_i + phi_i - phi_{i-1}| + h * sum_i |phi_i|,
// by dynamic programming over convex piecewise-linear value functions.
// Each DP step is an infimal convolution with |.| (slope clamping to
// [-1, 1]), an argument shift, and the addition of h|x|.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "rmtlab/parallel.hpp"
#include "rmtlab/semicircle.hpp"
#include "rmtlab/spectral.hpp"

namespace rmtlab {

namespace detail {

// Convex piecewise-linear function: values at ascending breakpoints plus
// the two outer slopes.  Supports exactly the operations the chain DP needs.
class ConvexPiecewise {
 public:
  ConvexPiecewise(std::vector<double> xs, std::vector<double> vs, double slope_left,
                  double slope_right)
      : xs_(std::move(xs)), vs_(std::move(vs)), sl_(slope_left), sr_(slope_right) {}

  double evaluate(double x) const {
    if (x <= xs_.front()) return vs_.front() + sl_ * (x - xs_.front());
    if (x >= xs_.back()) return vs_.back() + sr_ * (x - xs_.back());
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - xs_.begin());
    const double t = (x - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
    return vs_[i - 1] + t * (vs_[i] - vs_[i - 1]);
  }

  // Infimal convolution with |.|: clamps every slope into [-1, 1] while
  // keeping the minimum value and its location.
  void smooth() {
    const std::size_t k = xs_.size();
    std::vector<double> s(k + 1);
    s[0] = sl_;
    for (std::size_t i = 1; i < k; ++i) s[i] = (vs_[i] - vs_[i - 1]) / (xs_[i] - xs_[i - 1]);
    s[k] = sr_;
    for (auto& v : s) v = std::clamp(v, -1.0, 1.0);
    const std::size_t m = static_cast<std::size_t>(
        std::min_element(vs_.begin(), vs_.end()) - vs_.begin());
    for (std::size_t i = m + 1; i < k; ++i)
      vs_[i] = vs_[i - 1] + s[i] * (xs_[i] - xs_[i - 1]);
    for (std::size_t i = m; i-- > 0;)
      vs_[i] = vs_[i + 1] - s[i + 1] * (xs_[i + 1] - xs_[i]);
    sl_ = s[0];
    sr_ = s[k];
  }

  void shift(double dx) {
    for (auto& x : xs_) x += dx;
  }

  void add_abs(double h) {
    insert_breakpoint(0.0);
    for (std::size_t i = 0; i < xs_.size(); ++i) vs_[i] += h * std::fabs(xs_[i]);
    sl_ -= h;
    sr_ += h;
  }

  double min_value() const { return *std::min_element(vs_.begin(), vs_.end()); }

 private:
  void insert_breakpoint(double x) {
    const auto it = std::lower_bound(xs_.begin(), xs_.end(), x);
    if (it != xs_.end() && *it == x) return;
    const double v = evaluate(x);
    const std::size_t i = static_cast<std::size_t>(it - xs_.begin());
    xs_.insert(xs_.begin() + static_cast<std::ptrdiff_t>(i), x);
    vs_.insert(vs_.begin() + static_cast<std::ptrdiff_t>(i), v);
  }

  std::vector<double> xs_, vs_;
  double sl_, sr_;
};

}  // namespace detail

// Exact optimum of the node-weight LP described above; c are the nodal
// weights of the signed measure difference, h the grid spacing.
inline double bounded_lipschitz_chain(const std::vector<double>& c, double h) {
  const std::size_t m = c.size();
  if (m == 0) throw std::invalid_argument("bounded_lipschitz_chain: empty weights");
  if (!(h > 0.0)) throw std::invalid_argument("bounded_lipschitz_chain: spacing must be positive");
  if (m == 1) return std::fabs(c[0]);

  // V_1(phi) = |c_1 + phi| + h*|phi|.
  detail::ConvexPiecewise v = [&] {
    const double a = -c[0];
    if (a == 0.0)
      return detail::ConvexPiecewise({0.0}, {0.0}, -1.0 - h, 1.0 + h);
    std::vector<double> xs{std::min(a, 0.0), std::max(a, 0.0)};
    std::vector<double> vs{0.0, 0.0};
    for (std::size_t i = 0; i < 2; ++i) vs[i] = std::fabs(c[0] + xs[i]) + h * std::fabs(xs[i]);
    return detail::ConvexPiecewise(std::move(xs), std::move(vs), -1.0 - h, 1.0 + h);
  }();

  for (std::size_t i = 1; i + 1 < m; ++i) {
    v.smooth();
    v.shift(-c[i]);
    v.add_abs(h);
  }
  v.smooth();
  return v.evaluate(c[m - 1]);
}

struct SemicircleDistance {
  int n = 0;
  double w1 = 0.0;
  double grid_bl = 0.0;
  int grid_size = 0;
};

namespace detail {

// Nodal weights of the semicircle law against the piecewise-linear hat
// basis on the grid, via the closed-form antiderivatives of F and x*rho.
inline std::vector<double> semicircle_hat_weights(const std::vector<double>& nodes) {
  auto mass = [](double a, double b) {  // integral of rho over [a,b]
    return semicircle_cdf(b) - semicircle_cdf(a);
  };
  auto first_moment = [](double a, double b) {  // integral of x*rho over [a,b]
    auto hfun = [](double t) {
      const double cl = std::clamp(t, -2.0, 2.0);
      const double s = 4.0 - cl * cl;
      return -s * std::sqrt(s) / (6.0 * kPi);
    };
    return hfun(b) - hfun(a);
  };
  const std::size_t m = nodes.size();
  std::vector<double> w(m, 0.0);
  for (std::size_t k = 0; k + 1 < m; ++k) {
    const double a = std::max(nodes[k], -2.0);
    const double b = std::min(nodes[k + 1], 2.0);
    if (b <= a) continue;
    const double h = nodes[k + 1] - nodes[k];
    const double m0 = mass(a, b);
    const double m1 = first_moment(a, b);
    // rising hat (x - x_k)/h on node k+1, falling hat on node k
    w[k + 1] += (m1 - nodes[k] * m0) / h;
    w[k] += (nodes[k + 1] * m0 - m1) / h;
  }
  return w;
}

}  // namespace detail

// Both distances between the normalized empirical spectral measure
// (eigenvalues / sqrt(n)) and the semicircle law.
inline SemicircleDistance distance_to_semicircle(const Spectrum& s, int grid_size) {
  if (grid_size < 16) throw std::invalid_argument("distance_to_semicircle: grid_size must be >= 16");
  const int n = static_cast<int>(s.eigenvalues.size());
  if (n == 0) throw std::invalid_argument("distance_to_semicircle: empty spectrum");
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.n));
  std::vector<double> atoms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) atoms[static_cast<std::size_t>(i)] = s.eigenvalues(i) * scale;

  SemicircleDistance out;
  out.n = s.n;
  out.grid_size = grid_size;
  out.w1 = w1_to_semicircle(atoms);

  const std::size_t m = static_cast<std::size_t>(grid_size);
  const double lo = -3.0, hi = 3.0;
  const double h = (hi - lo) / static_cast<double>(m - 1);
  std::vector<double> nodes(m);
  for (std::size_t i = 0; i < m; ++i) nodes[i] = lo + h * static_cast<double>(i);

  std::vector<double> c = detail::semicircle_hat_weights(nodes);
  for (auto& v : c) v = -v;  // empirical minus semicircle
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double x : atoms) {
    const double xc = std::clamp(x, lo, hi);
    const double pos = (xc - lo) / h;
    std::size_t cell = std::min(m - 2, static_cast<std::size_t>(pos));
    const double t = std::clamp(pos - static_cast<double>(cell), 0.0, 1.0);
    c[cell] += (1.0 - t) * inv_n;
    c[cell + 1] += t * inv_n;
  }
  out.grid_bl = bounded_lipschitz_chain(c, h);
  return out;
}

// ----------------------------------------------------------------------------
// Envelope and moment statistics of k * mu_k.

// Source of spectra indexed by trial.  The ensemble-backed source decomposes
// a fresh sample per trial; tests may substitute any deterministic provider.
using SpectrumSource = std::function<Spectrum(std::uint64_t)>;

inline SpectrumSource ensemble_source(const EnsembleSpec& spec, bool want_vectors = false) {
  return [spec, want_vectors](std::uint64_t trial) {
    return decompose(sample_matrix(spec, trial), want_vectors);
  };
}

struct RigidityReport {
  int n = 0;
  double lambda = 0.0;
  int k_lo = 0, k_hi = 0;
  int samples = 0;
  std::vector<double> envelope_min;       // per k in [k_lo, k_hi]
  std::vector<double> envelope_max;       // per k in [k_lo, k_hi]
  double ratio_tail_freq = 0.0;           // freq of mu_{k_hi}/mu_1 >= 1e-2
  std::vector<double> moment_p;           // requested exponents
  std::vector<double> moment_estimates;   // mean of (sqrt(n)/(k_hi*mu_{k_hi}))^p
};

// Envelope of k*mu_k(lambda)/sqrt(n) over samples, with the mu_{k_hi}/mu_1
// ratio tail frequency and inverse-power moments evaluated at k = k_hi.
inline RigidityReport envelope_report(const SpectrumSource& source, int n, double lambda,
                                      int k_lo, int k_hi, int samples,
                                      std::vector<double> moment_p = {},
                                      int workers = 0) {
  if (samples < 1) throw std::invalid_argument("envelope_report: needs at least one sample");
  if (k_lo < 1 || k_hi < k_lo || k_hi > n)
    throw std::invalid_argument("envelope_report: bad k range");
  const std::size_t nk = static_cast<std::size_t>(k_hi - k_lo + 1);
  const std::size_t ns = static_cast<std::size_t>(samples);

  std::vector<std::vector<double>> rows(ns);
  std::vector<double> ratios(ns);
  parallel_for_index(ns, workers, [&](std::uint64_t t) {
    const Spectrum s = source(t);
    const auto dist = sorted_distances(s, lambda);
    std::vector<double> row(nk);
    const double rootn = std::sqrt(static_cast<double>(s.n));
    for (std::size_t i = 0; i < nk; ++i) {
      const int k = k_lo + static_cast<int>(i);
      const double d = dist[static_cast<std::size_t>(k - 1)];
      if (d == 0.0) throw SingularLocation("envelope_report: location hits an eigenvalue");
      row[i] = static_cast<double>(k) / (d * rootn);
    }
    ratios[t] = dist[0] / dist[static_cast<std::size_t>(k_hi - 1)];  // mu_{k_hi}/mu_1
    rows[t] = std::move(row);
  });

  RigidityReport rep;
  rep.n = n;
  rep.lambda = lambda;
  rep.k_lo = k_lo;
  rep.k_hi = k_hi;
  rep.samples = samples;
  rep.envelope_min.assign(nk, std::numeric_limits<double>::infinity());
  rep.envelope_max.assign(nk, -std::numeric_limits<double>::infinity());
  rep.moment_p = std::move(moment_p);
  rep.moment_estimates.assign(rep.moment_p.size(), 0.0);
  int tail_count = 0;
  for (std::size_t t = 0; t < ns; ++t) {
    for (std::size_t i = 0; i < nk; ++i) {
      rep.envelope_min[i] = std::min(rep.envelope_min[i], rows[t][i]);
      rep.envelope_max[i] = std::max(rep.envelope_max[i], rows[t][i]);
    }
    if (ratios[t] >= 1e-2) ++tail_count;
    const double stat = 1.0 / rows[t][nk - 1];  // sqrt(n) / (k_hi * mu_{k_hi})
    for (std::size_t p = 0; p < rep.moment_p.size(); ++p)
      rep.moment_estimates[p] += std::pow(stat, rep.moment_p[p]);
  }
  for (auto& v : rep.moment_estimates) v /= static_cast<double>(ns);
  rep.ratio_tail_freq = static_cast<double>(tail_count) / static_cast<double>(ns);
  return rep;
}

inline RigidityReport envelope_report(const EnsembleSpec& spec, double lambda, int k_lo,
                                      int k_hi, int samples,
                                      std::vector<double> moment_p = {}, int workers = 0) {
  return envelope_report(ensemble_source(spec), spec.n, lambda, k_lo, k_hi, samples,
                         std::move(moment_p), workers);
}

// Mean of (sqrt(n)/(k*mu_k))^p over samples at a single k.
inline double moment_check(const SpectrumSource& source, double lambda, int k, double p,
                           int samples, int workers = 0) {
  if (samples < 1) throw std::invalid_argument("moment_check: needs at least one sample");
  if (k < 1) throw std::invalid_argument("moment_check: k must be >= 1");
  std::vector<double> vals(static_cast<std::size_t>(samples));
  parallel_for_index(static_cast<std::uint64_t>(samples), workers, [&](std::uint64_t t) {
    const Spectrum s = source(t);
    const auto dist = sorted_distances(s, lambda);
    if (k > static_cast<int>(dist.size()))
      throw std::invalid_argument("moment_check: k exceeds dimension");
    const double stat =
        std::sqrt(static_cast<double>(s.n)) * dist[static_cast<std::size_t>(k - 1)] /
        static_cast<double>(k);
    vals[t] = std::pow(stat, p);
  });
  double acc = 0.0;
  for (double v : vals) acc += v;
  return acc / static_cast<double>(samples);
}

inline double moment_check(const EnsembleSpec& spec, double lambda, int k, double p,
                           int samples, int workers = 0) {
  return moment_check(ensemble_source(spec), lambda, k, p, samples, workers);
}

}  // namespace rmtlab
