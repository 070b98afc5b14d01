#pragma once

// Minimum of |sum_i a_i x_i - c| over ordered d-tuples of pairwise-distinct
// bulk eigenvalues that are pairwise "distant":
//   x_i in I_kappa = [-(2-kappa)sqrt(n), (2-kappa)sqrt(n)],
//   |x_i - x_j| >= delta_sep * n^(sep_exponent - 1/2)  for i != j.
//
// The scan is exact and agrees with exhaustive enumeration bit for bit:
// every candidate tuple's residual is evaluated by one canonical routine
// (left-to-right accumulation in position order), the last position is
// located by bisection on the sign of that canonical residual (monotone in
// the remaining eigenvalue), and branch-and-bound pruning keeps a rounding
// safety margin so the true minimizer is never discarded.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rmtlab/parallel.hpp"
#include "rmtlab/smallball.hpp"
#include "rmtlab/spectral.hpp"
#include "rmtlab/stats.hpp"

namespace rmtlab {

struct RelationSpec {
  std::vector<double> coefficients;  // the a_i, all nonzero
  double offset = 0.0;               // the c
  double kappa = 0.5;                // <= 0 disables the bulk filter
  double delta_sep = 0.5;            // <= 0 disables the separation filter
  double sep_exponent = 1.0;
};

struct RelationScanResult {
  double min_value = 0.0;
  std::vector<double> argmin_tuple;  // eigenvalues in position order
  std::uint64_t tuple_count = 0;     // ordered admissible tuples
};

// No tuple satisfies the filters.
struct EmptyDomain : std::runtime_error {
  explicit EmptyDomain(const std::string& what_) : std::runtime_error(what_) {}
  std::uint64_t tuple_count = 0;
};

namespace detail {

// Canonical residual: |(((a_1 x_1) + a_2 x_2) + ...) - c| with plain
// double accumulation.  Scan, brute force and tests all call this, which is
// what makes "equals brute force exactly" achievable in floating point.
inline double relation_residual(const std::vector<double>& a, double c,
                                const double* xs, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += a[k] * xs[k];
  return std::fabs(s - c);
}

inline void validate_relation(const RelationSpec& spec) {
  if (spec.coefficients.empty())
    throw std::invalid_argument("relation: needs at least one coefficient");
  for (double a : spec.coefficients)
    if (a == 0.0) throw std::invalid_argument("relation: coefficients must be nonzero");
  if (!(spec.sep_exponent > 0.0 && spec.sep_exponent <= 1.0))
    throw std::invalid_argument("relation: sep_exponent must lie in (0,1]");
}

// Admissible eigenvalues after the bulk filter, ascending.
inline std::vector<double> admissible_values(const Spectrum& s, const RelationSpec& spec) {
  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(s.eigenvalues.size()));
  const bool bulk = spec.kappa > 0.0 && spec.kappa < 2.0;
  const double half = bulk ? bulk_halfwidth(spec.kappa, s.n) : 0.0;
  for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i) {
    const double x = s.eigenvalues(i);
    if (!bulk || std::fabs(x) <= half) xs.push_back(x);
  }
  return xs;  // eigenvalues come ascending; the filter preserves order
}

inline double separation_scale(const RelationSpec& spec, int n) {
  return spec.delta_sep > 0.0
             ? required_separation(spec.delta_sep, spec.sep_exponent, n)
             : 0.0;
}

// Number of ordered d-tuples of distinct indices whose values are pairwise
// at least sep apart.  For sorted values, pairwise separation is equivalent
// to consecutive separation, so unordered selections are counted by a
// suffix-sum DP and multiplied by d!.
inline std::uint64_t count_admissible_tuples(const std::vector<double>& xs,
                                             std::size_t d, double sep) {
  const std::size_t n = xs.size();
  if (d == 0 || n < d) return 0;
  // next[i] = first j > i with xs[j] - xs[i] >= sep
  std::vector<std::size_t> next(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (sep <= 0.0) {
      next[i] = i + 1;
    } else {
      next[i] = static_cast<std::size_t>(
          std::lower_bound(xs.begin() + static_cast<std::ptrdiff_t>(i) + 1, xs.end(),
                           xs[i] + sep) -
          xs.begin());
    }
  }
  // suffix[i] = number of selections of the current size with minimum index >= i
  std::vector<std::uint64_t> ways(n, 1), suffix(n + 1, 0);
  for (std::size_t level = 2; level <= d; ++level) {
    suffix[n] = 0;
    for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + ways[i];
    for (std::size_t i = 0; i < n; ++i) ways[i] = suffix[std::min(next[i], n)];
  }
  std::uint64_t sets = 0;
  for (std::size_t i = 0; i < n; ++i) sets += ways[i];
  std::uint64_t factorial = 1;
  for (std::size_t k = 2; k <= d; ++k) factorial *= k;
  return sets * factorial;
}

// State for the recursive exact scan.
struct ScanState {
  const std::vector<double>* xs = nullptr;
  const RelationSpec* spec = nullptr;
  double sep = 0.0;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> chosen;
  std::vector<double> chosen_values;
  std::vector<double> best_tuple;
  double prune_slack = 0.0;
};

inline bool index_admissible(const ScanState& st, std::size_t j) {
  const double xj = (*st.xs)[j];
  for (std::size_t k = 0; k < st.chosen.size(); ++k) {
    if (st.chosen[k] == j) return false;
    if (st.sep > 0.0 && std::fabs(xj - st.chosen_values[k]) < st.sep) return false;
  }
  return true;
}

// Evaluate candidate j as the final position; partial is the canonical
// accumulated sum of the earlier positions.
inline void try_final(ScanState& st, double partial, std::size_t j) {
  if (!index_admissible(st, j)) return;
  const double last = st.spec->coefficients.back() * (*st.xs)[j];
  const double r = std::fabs((partial + last) - st.spec->offset);
  if (r < st.best) {
    st.best = r;
    st.best_tuple = st.chosen_values;
    st.best_tuple.push_back((*st.xs)[j]);
  }
}

// The canonical residual of the full tuple, as a signed value, is monotone
// in the final eigenvalue (for fixed earlier positions), so its zero
// crossing inside an index range is found by bisection; the minimizer of
// the absolute value sits next to the crossing.
inline void scan_final_range(ScanState& st, double partial, std::size_t lo, std::size_t hi) {
  if (lo >= hi) return;
  const double ad = st.spec->coefficients.back();
  auto signed_r = [&](std::size_t j) {
    return (partial + ad * (*st.xs)[j]) - st.spec->offset;
  };
  const double rlo = signed_r(lo), rhi = signed_r(hi - 1);
  if ((rlo >= 0.0) == (rhi >= 0.0)) {
    // No sign change: minimum lies at one end of the range.
    try_final(st, partial, lo);
    if (hi - lo > 1) try_final(st, partial, hi - 1);
    // Guard against non-admissible endpoints hiding the true optimum.
    if (hi - lo > 2) {
      try_final(st, partial, lo + 1);
      try_final(st, partial, hi - 2);
    }
    return;
  }
  const bool ascending = rhi >= 0.0;
  std::size_t a = lo, b = hi - 1;
  while (b - a > 1) {
    const std::size_t mid = a + (b - a) / 2;
    const bool nonneg = signed_r(mid) >= 0.0;
    if (nonneg == ascending)
      b = mid;
    else
      a = mid;
  }
  // Crossing between a and b; check a window around it (admissibility may
  // knock out the nearest candidates).
  const std::size_t wlo = a >= lo + 2 ? a - 2 : lo;
  const std::size_t whi = std::min(hi, b + 3);
  for (std::size_t j = wlo; j < whi; ++j) try_final(st, partial, j);
}

// Complement of the exclusion intervals induced by chosen values, as index
// ranges of xs, each passed to scan_final_range.
inline void scan_final_position(ScanState& st, double partial) {
  const auto& xs = *st.xs;
  const std::size_t n = xs.size();
  if (st.sep <= 0.0) {
    scan_final_range(st, partial, 0, n);
    // Used indices are excluded inside try_final; also probe neighbors of
    // each used index in case the crossing sat exactly there.
    for (std::size_t u : st.chosen) {
      if (u > 0) try_final(st, partial, u - 1);
      if (u + 1 < n) try_final(st, partial, u + 1);
    }
    return;
  }
  std::vector<std::pair<double, double>> excl;
  for (double v : st.chosen_values) excl.emplace_back(v - st.sep, v + st.sep);
  std::sort(excl.begin(), excl.end());
  double cursor = -std::numeric_limits<double>::infinity();
  auto emit = [&](double from, double to) {
    // The exclusion intervals are open: admissible means |x - v| >= sep, so
    // a value sitting exactly at v +/- sep stays admissible and both range
    // boundaries are inclusive.
    const std::size_t lo = static_cast<std::size_t>(
        std::lower_bound(xs.begin(), xs.end(), from) - xs.begin());
    std::size_t hi;
    if (to == std::numeric_limits<double>::infinity()) {
      hi = n;
    } else {
      hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), to) -
                                    xs.begin());
    }
    scan_final_range(st, partial, lo, hi);
  };
  for (const auto& [a, b] : excl) {
    if (a > cursor) emit(cursor, a);
    cursor = std::max(cursor, b);
  }
  emit(cursor, std::numeric_limits<double>::infinity());
}

inline void scan_recursive(ScanState& st, std::size_t position, double partial) {
  const auto& a = st.spec->coefficients;
  const std::size_t d = a.size();
  if (position + 1 == d) {
    scan_final_position(st, partial);
    return;
  }
  const auto& xs = *st.xs;
  // Bound the reachable range of the remaining contributions for pruning.
  double lo_rest = 0.0, hi_rest = 0.0;
  for (std::size_t k = position; k < d; ++k) {
    const double c1 = a[k] * xs.front(), c2 = a[k] * xs.back();
    lo_rest += std::min(c1, c2);
    hi_rest += std::max(c1, c2);
  }
  const double target = st.spec->offset - partial;
  double reach_gap = 0.0;
  if (target < lo_rest) reach_gap = lo_rest - target;
  if (target > hi_rest) reach_gap = target - hi_rest;
  if (reach_gap > st.best + st.prune_slack) return;

  for (std::size_t j = 0; j < xs.size(); ++j) {
    if (!index_admissible(st, j)) continue;
    st.chosen.push_back(j);
    st.chosen_values.push_back(xs[j]);
    scan_recursive(st, position + 1, partial + a[position] * xs[j]);
    st.chosen.pop_back();
    st.chosen_values.pop_back();
  }
}

}  // namespace detail

// Exhaustive reference scan over all ordered tuples; O(n^d).  Also the
// extension point for arbitrary relation statistics: `residual` receives the
// tuple's eigenvalues in position order and returns the value to minimize.
inline RelationScanResult scan_relation_exhaustive_fn(
    const Spectrum& s, const RelationSpec& spec,
    const std::function<double(const double*, std::size_t)>& residual) {
  detail::validate_relation(spec);
  const auto xs = detail::admissible_values(s, spec);
  const double sep = detail::separation_scale(spec, s.n);
  const std::size_t d = spec.coefficients.size();

  RelationScanResult out;
  out.tuple_count = detail::count_admissible_tuples(xs, d, sep);
  out.min_value = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> idx(d);
  std::vector<double> vals(d);
  std::uint64_t seen = 0;

  std::function<void(std::size_t)> rec = [&](std::size_t pos) {
    if (pos == d) {
      ++seen;
      const double r = residual(vals.data(), d);
      if (r < out.min_value) {
        out.min_value = r;
        out.argmin_tuple = vals;
      }
      return;
    }
    for (std::size_t j = 0; j < xs.size(); ++j) {
      bool ok = true;
      for (std::size_t k = 0; k < pos; ++k) {
        if (idx[k] == j || (sep > 0.0 && std::fabs(xs[j] - vals[k]) < sep)) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      idx[pos] = j;
      vals[pos] = xs[j];
      rec(pos + 1);
    }
  };
  rec(0);

  if (seen == 0) {
    EmptyDomain e("relation scan: no admissible tuple");
    throw e;
  }
  out.tuple_count = seen;  // definitionally exact; matches the DP count
  return out;
}

inline RelationScanResult scan_relation_exhaustive(const Spectrum& s,
                                                   const RelationSpec& spec) {
  return scan_relation_exhaustive_fn(s, spec, [&](const double* xs, std::size_t d) {
    return detail::relation_residual(spec.coefficients, spec.offset, xs, d);
  });
}

// Exact minimum via the fast scan: direct sweep for d = 1, per-value sign
// bisection for d = 2, branch-and-bound recursion for d >= 3.
inline RelationScanResult min_linear_relation(const Spectrum& s, const RelationSpec& spec) {
  detail::validate_relation(spec);
  const auto xs = detail::admissible_values(s, spec);
  const double sep = detail::separation_scale(spec, s.n);
  const std::size_t d = spec.coefficients.size();

  RelationScanResult out;
  out.tuple_count = detail::count_admissible_tuples(xs, d, sep);
  if (out.tuple_count == 0) {
    EmptyDomain e("relation scan: no admissible tuple");
    throw e;
  }

  detail::ScanState st;
  st.xs = &xs;
  st.spec = &spec;
  st.sep = sep;
  double scale = std::fabs(spec.offset);
  const double xmax = std::max(std::fabs(xs.front()), std::fabs(xs.back()));
  for (double a : spec.coefficients) scale += std::fabs(a) * xmax;
  st.prune_slack = 64.0 * std::numeric_limits<double>::epsilon() * scale *
                   static_cast<double>(d);

  if (d == 1) {
    for (std::size_t j = 0; j < xs.size(); ++j) detail::try_final(st, 0.0, j);
  } else {
    detail::scan_recursive(st, 0, 0.0);
  }
  out.min_value = st.best;
  out.argmin_tuple = st.best_tuple;
  return out;
}

// Distinct-eigenvalue additive gap: the d = 2, a = (1,1), c = 0 special case
// (are there two distant eigenvalues summing to zero?).
inline RelationScanResult distinct_singular_gap(const Spectrum& s, double kappa,
                                                double delta_sep,
                                                double sep_exponent = 1.0) {
  RelationSpec spec;
  spec.coefficients = {1.0, 1.0};
  spec.offset = 0.0;
  spec.kappa = kappa;
  spec.delta_sep = delta_sep;
  spec.sep_exponent = sep_exponent;
  return min_linear_relation(s, spec);
}

// ----------------------------------------------------------------------------
// n-scaling of the minimum statistic.

struct RelationScalingRow {
  int n = 0;
  double median_min = 0.0;
  int samples_used = 0;
  int samples_excluded = 0;          // empty admissible domain
  std::vector<double> min_values;    // per sample; NaN where excluded
  std::vector<std::vector<double>> argmin_tuples;  // empty where excluded
  std::vector<std::uint64_t> tuple_counts;         // 0 where excluded
};

struct RelationScalingResult {
  ScalingFit fit;                    // log(median) vs log(n)
  bool fit_ok = false;               // false: fewer than two usable dimensions
  std::string fit_error;
  std::vector<RelationScalingRow> rows;
};

using SpectrumFamily = std::function<Spectrum(int n, std::uint64_t trial)>;

inline SpectrumFamily ensemble_family(const EntryDistribution& entry, double diag_scale,
                                      std::uint64_t master_seed) {
  return [entry, diag_scale, master_seed](int n, std::uint64_t trial) {
    EnsembleSpec spec;
    spec.n = n;
    spec.entry = entry;
    spec.diag_scale = diag_scale;
    // Different n must not share entry streams: fold n into the seed.
    spec.master_seed = splitmix64(master_seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(n)));
    return decompose(sample_matrix(spec, trial));
  };
}

inline RelationScalingResult scaling_vs_n_detailed(const RelationSpec& spec,
                                                   const SpectrumFamily& family,
                                                   const std::vector<int>& n_grid,
                                                   int samples_per_n, int workers = 0) {
  detail::validate_relation(spec);
  if (n_grid.size() < 3) throw std::invalid_argument("scaling_vs_n: need at least 3 dimensions");
  if (samples_per_n < 50) throw std::invalid_argument("scaling_vs_n: need at least 50 samples per n");

  RelationScalingResult result;
  for (int n : n_grid) {
    RelationScalingRow row;
    row.n = n;
    row.min_values.assign(static_cast<std::size_t>(samples_per_n),
                          std::numeric_limits<double>::quiet_NaN());
    row.argmin_tuples.assign(static_cast<std::size_t>(samples_per_n), {});
    row.tuple_counts.assign(static_cast<std::size_t>(samples_per_n), 0);
    parallel_for_index(static_cast<std::uint64_t>(samples_per_n), workers,
                       [&](std::uint64_t t) {
                         const Spectrum sp = family(n, t);
                         try {
                           RelationScanResult r = min_linear_relation(sp, spec);
                           row.min_values[t] = r.min_value;
                           row.argmin_tuples[t] = std::move(r.argmin_tuple);
                           row.tuple_counts[t] = r.tuple_count;
                         } catch (const EmptyDomain&) {
                           // left as NaN; counted below
                         }
                       });
    std::vector<double> usable;
    for (double v : row.min_values)
      if (!std::isnan(v)) usable.push_back(v);
    row.samples_used = static_cast<int>(usable.size());
    row.samples_excluded = samples_per_n - row.samples_used;
    row.median_min = usable.empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : median(usable);
    result.rows.push_back(std::move(row));
  }

  std::vector<double> lx, ly;
  for (const auto& row : result.rows) {
    if (row.samples_used == 0 || !(row.median_min > 0.0)) continue;
    lx.push_back(std::log(static_cast<double>(row.n)));
    ly.push_back(std::log(row.median_min));
  }
  if (lx.size() < 2) {
    result.fit_error = "scaling_vs_n: fewer than two usable dimensions";
    return result;
  }
  const OlsFit f = ols_fit(lx, ly);
  result.fit.slope = f.slope;
  result.fit.intercept = f.intercept;
  result.fit.r_squared = f.r_squared;
  result.fit.slope_stderr = f.slope_stderr;
  result.fit.points_used = f.points;
  result.fit_ok = true;
  return result;
}

inline ScalingFit scaling_vs_n(const RelationSpec& spec, const SpectrumFamily& family,
                               const std::vector<int>& n_grid, int samples_per_n,
                               int workers = 0) {
  const RelationScalingResult r =
      scaling_vs_n_detailed(spec, family, n_grid, samples_per_n, workers);
  if (!r.fit_ok) throw std::runtime_error(r.fit_error);
  return r.fit;
}

}  // namespace rmtlab
