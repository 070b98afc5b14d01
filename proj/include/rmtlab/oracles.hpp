#pragma once

// Numeric verification of the exact identities and auxiliary inequalities the
// rest of the laboratory relies on: the column-distance quadratic-form
// formula, the |v_j|*d_j lower bound for sigma_min, the singular-value
// product inequality, a sub-gaussian concentration tail for ||MX||_2, a
// nested-Monte-Carlo decoupling inequality for quadratic characteristic
// functions, product-region volumes (closed form / quadrature vs hit-or-miss
// Monte Carlo), and the operator-norm tail.  Deterministic checks report
// worst-case errors with the seed that reproduces them.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rmtlab/ensemble.hpp"
#include "rmtlab/parallel.hpp"
#include "rmtlab/rng.hpp"
#include "rmtlab/spectral.hpp"

namespace rmtlab {

struct IdentityCheckResult {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  int instances = 0;          // instances actually evaluated
  int skipped = 0;            // near-singular instances skipped
  std::uint64_t worst_seed = 0;   // derived matrix seed of the worst instance
  std::uint64_t worst_trial = 0;  // trial index of the worst instance
};

// Pass threshold shared by the deterministic identity checks.
inline constexpr double kIdentityTol = 1e-9;
// Condition-number cutoff beyond which an instance is skipped as
// numerically singular; more than 1% skipped aborts the check.
inline constexpr double kConditionCutoff = 1e12;

// ----------------------------------------------------------------------------
// Column distances.

// Euclidean distance from column j of A to the span of the other columns,
// by least squares on the explicit basis.
inline double column_span_distance(const Eigen::MatrixXd& a, Eigen::Index j) {
  const Eigen::Index n = a.rows(), m = a.cols();
  Eigen::MatrixXd basis(n, m - 1);
  Eigen::Index c = 0;
  for (Eigen::Index k = 0; k < m; ++k)
    if (k != j) basis.col(c++) = a.col(k);
  const Eigen::VectorXd y = basis.colPivHouseholderQr().solve(a.col(j));
  return (a.col(j) - basis * y).norm();
}

// The same distance for column 1 of a symmetric matrix, via the
// quadratic-form identity |<B^{-1}X, X> - a_11| / sqrt(1 + ||B^{-1}X||^2)
// with B the trailing principal block and X the trailing part of column 1.
// (1, -B^{-1}X) is orthogonal to every other column, which is the whole
// proof of the identity.
inline double column_distance_formula(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  const double a11 = a(0, 0);
  const Eigen::VectorXd x = a.col(0).tail(n - 1);
  const Eigen::MatrixXd b = a.bottomRightCorner(n - 1, n - 1);
  const Eigen::VectorXd w = b.colPivHouseholderQr().solve(x);
  return std::fabs(w.dot(x) - a11) / std::sqrt(1.0 + w.squaredNorm());
}

namespace detail {

inline double condition_number(const Eigen::MatrixXd& m) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

inline double relative_error(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-30});
  return std::fabs(a - b) / scale;
}

inline EnsembleSpec plain_gaussian_spec(int n, std::uint64_t seed) {
  EnsembleSpec spec;
  spec.n = n;
  spec.entry.kind = EntryKind::gaussian;
  spec.entry.variance = 1.0;
  spec.diag_scale = 1.0;
  spec.master_seed = seed;
  return spec;
}

struct WorstTracker {
  double max_abs = 0.0;
  double max_rel = 0.0;
  std::uint64_t worst_seed = 0;
  std::uint64_t worst_trial = 0;
  void offer(double abs_err, double rel_err, std::uint64_t seed, std::uint64_t trial) {
    if (abs_err > max_abs) max_abs = abs_err;
    if (rel_err > max_rel) {
      max_rel = rel_err;
      worst_seed = seed;
      worst_trial = trial;
    }
  }
};

}  // namespace detail

// ----------------------------------------------------------------------------
// Distance identity: projection distance vs quadratic-form formula.

inline IdentityCheckResult distance_identity_check(int n, int instances,
                                                   std::uint64_t seed, int workers = 0) {
  if (n < 2) throw std::invalid_argument("distance_identity_check: n must be >= 2");
  if (instances < 1) throw std::invalid_argument("distance_identity_check: instances must be >= 1");
  const EnsembleSpec spec = detail::plain_gaussian_spec(n, seed);

  struct Row {
    double abs_err = 0.0, rel_err = 0.0;
    std::uint64_t seed = 0;
    bool skipped = false;
  };
  std::vector<Row> rows(static_cast<std::size_t>(instances));
  parallel_for_index(static_cast<std::uint64_t>(instances), workers, [&](std::uint64_t t) {
    const SampledMatrix m = sample_matrix(spec, t);
    Row& row = rows[t];
    row.seed = m.seed;
    const Eigen::MatrixXd b = m.mat.bottomRightCorner(n - 1, n - 1);
    if (detail::condition_number(b) > kConditionCutoff) {
      row.skipped = true;
      return;
    }
    const double via_projection = column_span_distance(m.mat, 0);
    const double via_formula = column_distance_formula(m.mat);
    row.abs_err = std::fabs(via_projection - via_formula);
    row.rel_err = detail::relative_error(via_projection, via_formula);
  });

  IdentityCheckResult out;
  detail::WorstTracker worst;
  for (std::uint64_t t = 0; t < rows.size(); ++t) {
    const Row& row = rows[t];
    if (row.skipped) {
      ++out.skipped;
      continue;
    }
    ++out.instances;
    worst.offer(row.abs_err, row.rel_err, row.seed, t);
  }
  if (out.skipped * 100 > instances)
    throw std::runtime_error("distance_identity_check: more than 1% of instances were "
                             "numerically singular; the ensemble is unsuitable");
  out.max_abs_error = worst.max_abs;
  out.max_rel_error = worst.max_rel;
  out.worst_seed = worst.worst_seed;
  out.worst_trial = worst.worst_trial;
  return out;
}

// ----------------------------------------------------------------------------
// sigma_min(M) >= |v_j| * d_j(M): v the unit eigenvector attaining
// sigma_min, d_j the distance from column j to the span of the others.

inline IdentityCheckResult sigma_min_distance_bound_check(int n, int instances,
                                                          std::uint64_t seed,
                                                          int workers = 0) {
  if (n < 2) throw std::invalid_argument("sigma_min_distance_bound_check: n must be >= 2");
  if (instances < 1)
    throw std::invalid_argument("sigma_min_distance_bound_check: instances must be >= 1");
  const EnsembleSpec spec = detail::plain_gaussian_spec(n, seed);

  struct Row {
    double violation = 0.0, rel = 0.0;
    std::uint64_t seed = 0;
  };
  std::vector<Row> rows(static_cast<std::size_t>(instances));
  parallel_for_index(static_cast<std::uint64_t>(instances), workers, [&](std::uint64_t t) {
    const SampledMatrix m = sample_matrix(spec, t);
    const Spectrum s = decompose(m, /*want_vectors=*/true);
    Eigen::Index arg = 0;
    s.eigenvalues.cwiseAbs().minCoeff(&arg);
    const double smin = std::fabs(s.eigenvalues(arg));
    const Eigen::VectorXd v = s.vectors.col(arg);
    Row& row = rows[t];
    row.seed = m.seed;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dj = column_span_distance(m.mat, j);
      const double violation = std::fabs(v(j)) * dj - smin;
      if (violation > row.violation) {
        row.violation = violation;
        row.rel = violation / std::max(smin, 1e-30);
      }
    }
  });

  IdentityCheckResult out;
  detail::WorstTracker worst;
  for (std::uint64_t t = 0; t < rows.size(); ++t) {
    ++out.instances;
    worst.offer(std::max(rows[t].violation, 0.0), std::max(rows[t].rel, 0.0),
                rows[t].seed, t);
  }
  out.max_abs_error = worst.max_abs;
  out.max_rel_error = worst.max_rel;
  out.worst_seed = worst.worst_seed;
  out.worst_trial = worst.worst_trial;
  return out;
}

// ----------------------------------------------------------------------------
// sigma_min(M_1 ... M_d) >= sigma_min(M_1) ... sigma_min(M_d) on
// independent square matrices with i.i.d. standard normal entries.

namespace detail {

inline Eigen::MatrixXd iid_gaussian_matrix(int n, std::uint64_t seed) {
  Xoshiro256pp rng(seed);
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = draw_normal(rng);
  return m;
}

}  // namespace detail

inline IdentityCheckResult product_inequality_check(int d, int n, int instances,
                                                    std::uint64_t seed, int workers = 0) {
  if (d < 2) throw std::invalid_argument("product_inequality_check: d must be >= 2");
  if (n < 1) throw std::invalid_argument("product_inequality_check: n must be >= 1");
  if (instances < 1)
    throw std::invalid_argument("product_inequality_check: instances must be >= 1");

  struct Row {
    double violation = 0.0, rel = 0.0;
    std::uint64_t seed = 0;
  };
  std::vector<Row> rows(static_cast<std::size_t>(instances));
  parallel_for_index(static_cast<std::uint64_t>(instances), workers, [&](std::uint64_t t) {
    Row& row = rows[t];
    row.seed = derive_seed(seed, t, 0);
    double product_of_mins = 1.0;
    Eigen::MatrixXd prod;
    for (int k = 0; k < d; ++k) {
      const Eigen::MatrixXd m =
          detail::iid_gaussian_matrix(n, derive_seed(seed, t, static_cast<std::uint64_t>(k)));
      const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
      product_of_mins *= svd.singularValues().minCoeff();
      prod = (k == 0) ? m : Eigen::MatrixXd(prod * m);
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(prod);
    const double smin_prod = svd.singularValues().minCoeff();
    row.violation = std::max(0.0, product_of_mins - smin_prod);
    row.rel = row.violation / std::max(smin_prod, 1e-30);
  });

  IdentityCheckResult out;
  detail::WorstTracker worst;
  for (std::uint64_t t = 0; t < rows.size(); ++t) {
    ++out.instances;
    worst.offer(rows[t].violation, rows[t].rel, rows[t].seed, t);
  }
  out.max_abs_error = worst.max_abs;
  out.max_rel_error = worst.max_rel;
  out.worst_seed = worst.worst_seed;
  out.worst_trial = worst.worst_trial;
  return out;
}

// ----------------------------------------------------------------------------
// Concentration of ||MX||_2 around ||M||_HS for i.i.d. mean-zero
// unit-variance coordinates.

struct TailRow {
  double t = 0.0;
  double threshold = 0.0;  // meaning depends on the check
  double frequency = 0.0;
};

struct HansonWrightResult {
  double hs_norm = 0.0;
  double op_norm = 0.0;
  double tail_at_4op = 0.0;  // empirical P(|  ||MX|| - ||M||_HS | > 4 ||M||_op)
  bool passed = false;       // tail_at_4op <= 0.05
  std::vector<TailRow> rows;
};

inline HansonWrightResult hanson_wright_check(const Eigen::MatrixXd& m,
                                              const EntryDistribution& dist, int trials,
                                              const std::vector<double>& t_grid,
                                              std::uint64_t seed, int workers = 0) {
  if (trials < 1) throw std::invalid_argument("hanson_wright_check: trials must be >= 1");
  HansonWrightResult out;
  out.hs_norm = m.norm();
  out.op_norm = m.cwiseAbs().sum() == 0.0
                    ? 0.0
                    : Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues().maxCoeff();

  std::vector<double> deviation(static_cast<std::size_t>(trials));
  const Eigen::Index cols = m.cols();
  parallel_for_index(static_cast<std::uint64_t>(trials), workers, [&](std::uint64_t t) {
    Xoshiro256pp rng(derive_seed(seed, t, 0));
    Eigen::VectorXd x(cols);
    for (Eigen::Index j = 0; j < cols; ++j) x(j) = draw_entry(dist, rng);
    deviation[t] = std::fabs((m * x).norm() - out.hs_norm);
  });

  auto tail = [&](double t) {
    std::size_t count = 0;
    for (double v : deviation)
      if (v > t) ++count;
    return static_cast<double>(count) / static_cast<double>(trials);
  };
  for (double t : t_grid) out.rows.push_back({t, t, tail(t)});
  out.tail_at_4op = tail(4.0 * out.op_norm);
  out.passed = out.tail_at_4op <= 0.05;
  return out;
}

// ----------------------------------------------------------------------------
// Decoupling inequality for quadratic characteristic functionals.
//
// For X = X_1 + X_2 with X_1 the gaussian smoothing component and X_2 the
// independent base component (entrywise, from a gaussian-divisible entry
// law), compare
//   lhs = |E exp(2 pi i theta <MX, X> + <X, u>)|^2
//   rhs = E_{X2, X2'} [ exp(<X2 + X2', u>) *
//                        |E_{X1} exp(4 pi i theta <M(X2 - X2'), X1> + 2 <X1, u>)| ]
// by nested Monte Carlo.  The inner modulus is biased upward by at most
// (inner sample variance) / (2 * inner_trials); the bound is reported and
// the check passes only when the margin clears it up to noise: the gate is
// margin >= bias_bound - 3 * combined standard errors.

struct DecouplingResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;       // rhs - lhs
  double lhs_se = 0.0;       // jackknife over batches
  double rhs_se = 0.0;       // jackknife over outer samples
  double margin_se = 0.0;    // combined
  double bias_bound = 0.0;   // documented upper bound on the rhs inflation
  double rhs_alternative = 0.0;  // modulus applied outside the outer mean
  bool passed = false;
};

inline DecouplingResult decoupling_check(int n, double theta, const Eigen::MatrixXd& m,
                                         const Eigen::VectorXd& u, int inner_trials,
                                         int outer_trials, const EntryDistribution& dist,
                                         std::uint64_t seed, int workers = 0) {
  if (n < 1 || n > 8)
    throw std::invalid_argument("decoupling_check: n must lie in [1, 8]");
  if (dist.kind != EntryKind::gaussian_divisible)
    throw std::invalid_argument("decoupling_check: entry law must be gaussian-divisible");
  if (inner_trials < 2 || outer_trials < 2)
    throw std::invalid_argument("decoupling_check: need at least 2 inner and outer trials");
  if (m.rows() != n || m.cols() != n || u.size() != n)
    throw std::invalid_argument("decoupling_check: dimension mismatch");

  const double scale = std::sqrt(dist.variance);
  const double gauss_coeff = scale * std::sqrt(dist.sigma0);
  const double base_coeff = scale * std::sqrt(1.0 - dist.sigma0);
  const double two_pi = 2.0 * 3.14159265358979323846;

  // --- lhs: batched plain Monte Carlo of the full characteristic functional.
  struct LhsBatch {
    double re = 0.0, im = 0.0;
  };
  std::vector<LhsBatch> lhs_batches(static_cast<std::size_t>(outer_trials));
  parallel_for_index(static_cast<std::uint64_t>(outer_trials), workers, [&](std::uint64_t b) {
    Xoshiro256pp rng(derive_seed(seed, b, 2));
    double sum_re = 0.0, sum_im = 0.0;
    Eigen::VectorXd x(n);
    for (int k = 0; k < inner_trials; ++k) {
      for (int j = 0; j < n; ++j) {
        const double x1 = gauss_coeff * draw_normal(rng);
        const double x2 = base_coeff * detail::draw_base(dist.base_kind, rng);
        x(j) = x1 + x2;
      }
      const double phase = two_pi * theta * x.dot(m * x);
      const double amp = std::exp(x.dot(u));
      sum_re += amp * std::cos(phase);
      sum_im += amp * std::sin(phase);
    }
    lhs_batches[b] = {sum_re / inner_trials, sum_im / inner_trials};
  });
  double tot_re = 0.0, tot_im = 0.0;
  for (const auto& b : lhs_batches) {
    tot_re += b.re;
    tot_im += b.im;
  }
  const double nb = static_cast<double>(outer_trials);
  const double mean_re = tot_re / nb, mean_im = tot_im / nb;
  DecouplingResult out;
  out.lhs = mean_re * mean_re + mean_im * mean_im;
  {
    // Jackknife over batches for the nonlinear statistic |mean|^2.
    double acc = 0.0, acc2 = 0.0;
    std::vector<double> loo(lhs_batches.size());
    for (std::size_t i = 0; i < lhs_batches.size(); ++i) {
      const double re = (tot_re - lhs_batches[i].re) / (nb - 1.0);
      const double im = (tot_im - lhs_batches[i].im) / (nb - 1.0);
      loo[i] = re * re + im * im;
      acc += loo[i];
    }
    const double loo_mean = acc / nb;
    for (double v : loo) acc2 += (v - loo_mean) * (v - loo_mean);
    out.lhs_se = std::sqrt(std::max(0.0, (nb - 1.0) / nb * acc2));
  }

  // --- rhs: outer over (X2, X2'), inner over X1.
  struct RhsRow {
    double value = 0.0;       // w * |inner mean|
    double signed_re = 0.0;   // w * inner mean (for the alternative reading)
    double signed_im = 0.0;
    double bias = 0.0;        // w * inner sample variance / (2 * inner)
  };
  std::vector<RhsRow> rhs_rows(static_cast<std::size_t>(outer_trials));
  parallel_for_index(static_cast<std::uint64_t>(outer_trials), workers, [&](std::uint64_t t) {
    Xoshiro256pp outer_rng(derive_seed(seed, t, 0));
    Eigen::VectorXd x2(n), x2p(n);
    for (int j = 0; j < n; ++j) x2(j) = base_coeff * detail::draw_base(dist.base_kind, outer_rng);
    for (int j = 0; j < n; ++j) x2p(j) = base_coeff * detail::draw_base(dist.base_kind, outer_rng);
    const double w = std::exp((x2 + x2p).dot(u));
    const Eigen::VectorXd mdiff = m * (x2 - x2p);

    Xoshiro256pp inner_rng(derive_seed(seed, t, 1));
    double sum_re = 0.0, sum_im = 0.0, sum_sq = 0.0;
    Eigen::VectorXd x1(n);
    for (int k = 0; k < inner_trials; ++k) {
      for (int j = 0; j < n; ++j) x1(j) = gauss_coeff * draw_normal(inner_rng);
      const double phase = 2.0 * two_pi * theta * mdiff.dot(x1);
      const double amp = std::exp(2.0 * x1.dot(u));
      const double re = amp * std::cos(phase), im = amp * std::sin(phase);
      sum_re += re;
      sum_im += im;
      sum_sq += re * re + im * im;
    }
    const double mi = static_cast<double>(inner_trials);
    const double mre = sum_re / mi, mim = sum_im / mi;
    const double mod = std::sqrt(mre * mre + mim * mim);
    // Sample variance of the complex inner draws.
    const double var = std::max(0.0, (sum_sq / mi - (mre * mre + mim * mim)) * mi / (mi - 1.0));
    rhs_rows[t] = {w * mod, w * mre, w * mim, w * var / (2.0 * mi)};
  });
  double rhs_sum = 0.0, alt_re = 0.0, alt_im = 0.0, bias_sum = 0.0;
  for (const auto& r : rhs_rows) {
    rhs_sum += r.value;
    alt_re += r.signed_re;
    alt_im += r.signed_im;
    bias_sum += r.bias;
  }
  out.rhs = rhs_sum / nb;
  out.rhs_alternative = std::sqrt((alt_re / nb) * (alt_re / nb) + (alt_im / nb) * (alt_im / nb));
  out.bias_bound = bias_sum / nb;
  {
    double acc2 = 0.0;
    for (const auto& r : rhs_rows) acc2 += (r.value - out.rhs) * (r.value - out.rhs);
    out.rhs_se = std::sqrt(acc2 / (nb * (nb - 1.0) + 1e-300));
  }

  out.margin = out.rhs - out.lhs;
  out.margin_se = std::sqrt(out.lhs_se * out.lhs_se + out.rhs_se * out.rhs_se);
  out.passed = out.margin >= out.bias_bound - 3.0 * out.margin_se;
  return out;
}

// ----------------------------------------------------------------------------
// Volumes of the product regions { prod |theta_i| <= s^d, |theta_i| >= 1 }.

namespace detail {

// Adaptive Simpson quadrature for smooth integrands.
inline double adaptive_simpson_impl(const std::function<double(double)>& f, double a,
                                    double b, double fa, double fm, double fb,
                                    double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson_impl(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_impl(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol) {
  if (b <= a) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_impl(f, a, b, fa, fm, fb, whole, tol, 28);
}

// Closed-form region volumes F_d(T); the recursion F_d(T) = 2 int_1^T
// F_{d-1}(T/y) dy telescopes into a polynomial in L = log T:
//   F_1 = 2(T - 1)
//   F_2 = 4(T L - T + 1)
//   F_3 = 8(T L^2/2 - T L + T - 1)
//   F_4 = 16(T L^3/6 - T L^2/2 + T L - T + 1)
inline double region_volume_series(int d, double t) {
  if (t <= 1.0) return 0.0;
  const double l = std::log(t);
  switch (d) {
    case 1: return 2.0 * (t - 1.0);
    case 2: return 4.0 * (t * l - t + 1.0);
    case 3: return 8.0 * (t * l * l / 2.0 - t * l + t - 1.0);
    case 4: return 16.0 * (t * (l * l * l / 6.0 - l * l / 2.0 + l) - t + 1.0);
    default: throw std::invalid_argument("region_volume_series: d must lie in [1, 4]");
  }
}

}  // namespace detail

// Closed form for d = 2 (the 4(s^2 ln s^2 - s^2 + 1) formula); numerically
// integrated recursion for d = 3, 4.
inline double region_volume_reference(int d, double s) {
  if (s <= 1.0) return 0.0;
  const double t = std::pow(s, d);
  if (d == 2) {
    const double s2 = s * s;
    return 4.0 * (s2 * std::log(s2) - s2 + 1.0);
  }
  if (d == 3) {
    return 2.0 * detail::adaptive_simpson(
                     [&](double y) { return detail::region_volume_series(2, t / y); }, 1.0,
                     t, 1e-11);
  }
  if (d == 4) {
    auto f3 = [&](double tt) {
      return 2.0 * detail::adaptive_simpson(
                       [&](double y) { return detail::region_volume_series(2, tt / y); },
                       1.0, tt, 1e-12);
    };
    return 2.0 * detail::adaptive_simpson([&](double y) { return f3(t / y); }, 1.0, t, 1e-10);
  }
  throw std::invalid_argument("region_volume_reference: d must lie in [2, 4]");
}

struct RegionVolumeRow {
  double s = 0.0;
  double reference = 0.0;  // closed form (d=2) or quadrature (d=3,4)
  double mc_volume = 0.0;
  double mc_se = 0.0;
  bool passed = false;  // |reference - mc| <= 3 se
};

inline std::vector<RegionVolumeRow> region_volume_check(int d,
                                                        const std::vector<double>& s_grid,
                                                        int mc_trials, std::uint64_t seed,
                                                        int workers = 0) {
  if (d < 2 || d > 4) throw std::invalid_argument("region_volume_check: d must lie in [2, 4]");
  if (mc_trials < 100)
    throw std::invalid_argument("region_volume_check: mc_trials must be >= 100");
  std::vector<RegionVolumeRow> rows;
  for (double s : s_grid) {
    if (!(s > 1.0)) throw std::invalid_argument("region_volume_check: s must be > 1");
    const double t = std::pow(s, d);
    const double box = 2.0 * t;  // each coordinate lies in [-T, T]
    double box_volume = 1.0;
    for (int k = 0; k < d; ++k) box_volume *= box;

    std::vector<std::uint8_t> hit(static_cast<std::size_t>(mc_trials), 0);
    const std::uint64_t stream = static_cast<std::uint64_t>(d);
    parallel_for_index(static_cast<std::uint64_t>(mc_trials), workers, [&](std::uint64_t k) {
      Xoshiro256pp rng(derive_seed(seed, k, stream));
      double prod = 1.0;
      bool ok = true;
      for (int j = 0; j < d; ++j) {
        const double theta = (2.0 * uniform01(rng) - 1.0) * t;
        const double a = std::fabs(theta);
        if (a < 1.0) {
          ok = false;
          // keep the draw count per trial fixed
          for (++j; j < d; ++j) uniform01(rng);
          break;
        }
        prod *= a;
      }
      hit[k] = (ok && prod <= t) ? 1 : 0;
    });
    std::size_t hits = 0;
    for (std::uint8_t h : hit) hits += h;
    const double p = static_cast<double>(hits) / static_cast<double>(mc_trials);
    RegionVolumeRow row;
    row.s = s;
    row.reference = region_volume_reference(d, s);
    row.mc_volume = box_volume * p;
    row.mc_se = box_volume * std::sqrt(std::max(0.0, p * (1.0 - p)) /
                                       static_cast<double>(mc_trials));
    row.passed = std::fabs(row.reference - row.mc_volume) <= 3.0 * row.mc_se;
    rows.push_back(row);
  }
  return rows;
}

// ----------------------------------------------------------------------------
// Operator-norm exceedance frequencies at thresholds (3 + t) sqrt(n).

inline std::vector<TailRow> operator_norm_tail(const EnsembleSpec& spec, int trials,
                                               const std::vector<double>& t_grid,
                                               int workers = 0) {
  if (trials < 100) throw std::invalid_argument("operator_norm_tail: trials must be >= 100");
  std::vector<double> norms(static_cast<std::size_t>(trials));
  parallel_for_index(static_cast<std::uint64_t>(trials), workers, [&](std::uint64_t t) {
    norms[t] = operator_norm(decompose(sample_matrix(spec, t)));
  });
  const double sqrt_n = std::sqrt(static_cast<double>(spec.n));
  std::vector<TailRow> rows;
  for (double t : t_grid) {
    const double threshold = (3.0 + t) * sqrt_n;
    std::size_t count = 0;
    for (double v : norms)
      if (v >= threshold) ++count;
    rows.push_back({t, threshold, static_cast<double>(count) / static_cast<double>(trials)});
  }
  return rows;
}

}  // namespace rmtlab
