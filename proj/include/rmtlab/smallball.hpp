#pragma once

// Joint small-ball probability estimation:
//   p(delta) = P( sigma_min(A - lambda_i I) <= delta_i * n^{-1/2} for all i ).
//
// One eigendecomposition per trial serves every location and every delta
// threshold simultaneously: trials produce a matrix of sigma_min values
// (trial x location), and all estimates, factorization ratios and scaling
// fits are derived from that shared sample afterwards.  Aggregation is a
// serial pass over trial-indexed storage, so results are bit-identical for
// any worker count.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rmtlab/parallel.hpp"
#include "rmtlab/rigidity.hpp"
#include "rmtlab/rng.hpp"
#include "rmtlab/spectral.hpp"
#include "rmtlab/stats.hpp"

namespace rmtlab {

struct TailEstimate {
  std::uint64_t trials = 0;     // effective trials (solver failures excluded)
  std::uint64_t successes = 0;
  double p_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

// Wilson score interval.  Exact at the boundaries: zero successes give
// ci_lo = 0 and full successes give ci_hi = 1.
inline std::pair<double, double> wilson_interval(std::uint64_t successes,
                                                 std::uint64_t trials, double level) {
  if (trials == 0) throw std::invalid_argument("wilson_interval: trials must be positive");
  if (successes > trials) throw std::invalid_argument("wilson_interval: successes > trials");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("wilson_interval: level must lie in (0,1)");
  const double z = normal_two_sided_quantile(level);
  const double nT = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / nT;
  const double z2 = z * z;
  const double denom = nT + z2;
  const double center = (static_cast<double>(successes) + 0.5 * z2) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) * nT + 0.25 * z2) / denom;
  double lo = center - half, hi = center + half;
  if (successes == 0) lo = 0.0;
  if (successes == trials) hi = 1.0;
  return {std::max(0.0, lo), std::min(1.0, hi)};
}

inline TailEstimate make_tail_estimate(std::uint64_t successes, std::uint64_t trials,
                                       double level) {
  TailEstimate e;
  e.trials = trials;
  e.successes = successes;
  e.p_hat = trials ? static_cast<double>(successes) / static_cast<double>(trials) : 0.0;
  auto [lo, hi] = wilson_interval(successes, trials, level);
  e.ci_lo = lo;
  e.ci_hi = hi;
  return e;
}

// sigma_min values for every (trial, location) from one sampling pass.
struct SigmaMinSamples {
  int n = 0;
  std::vector<double> lambdas;
  std::uint64_t requested_trials = 0;
  std::uint64_t failed_trials = 0;   // solver failures, excluded from estimates
  std::vector<double> values;        // row-major [trial][location]; NaN for failed
  double sigma_min(std::uint64_t trial, std::size_t loc) const {
    return values[trial * lambdas.size() + loc];
  }
};

// Runs the trials.  `source` must yield the spectrum of trial t; the
// ensemble-backed overload below is the standard path.
inline SigmaMinSamples run_sigma_min_samples(const SpectrumSource& source, int n,
                                             const std::vector<double>& lambdas,
                                             std::uint64_t trials, int workers = 0) {
  if (trials == 0) throw std::invalid_argument("run_sigma_min_samples: trials must be positive");
  if (lambdas.empty()) throw std::invalid_argument("run_sigma_min_samples: no locations");
  SigmaMinSamples s;
  s.n = n;
  s.lambdas = lambdas;
  s.requested_trials = trials;
  const std::size_t d = lambdas.size();
  s.values.assign(trials * d, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::uint8_t> failed(trials, 0);
  parallel_for_index(trials, workers, [&](std::uint64_t t) {
    try {
      const Spectrum sp = source(t);
      for (std::size_t i = 0; i < d; ++i)
        s.values[t * d + i] = sigma_min_at(sp, lambdas[i]);
    } catch (const SolverFailure&) {
      failed[t] = 1;
    }
  });
  for (std::uint64_t t = 0; t < trials; ++t) s.failed_trials += failed[t];
  return s;
}

inline SigmaMinSamples run_sigma_min_samples(const EnsembleSpec& spec,
                                             const std::vector<double>& lambdas,
                                             std::uint64_t trials, int workers = 0) {
  return run_sigma_min_samples(ensemble_source(spec), spec.n, lambdas, trials, workers);
}

namespace detail {

inline void check_deltas(const SigmaMinSamples& s, const std::vector<double>& deltas) {
  if (deltas.size() != s.lambdas.size())
    throw std::invalid_argument("smallball: deltas must match the location count");
  // Zero is a legal threshold: sigma_min is almost surely positive for
  // continuous ensembles, so the event simply never fires.
  for (double d : deltas)
    if (!(d >= 0.0)) throw std::invalid_argument("smallball: deltas must be nonnegative");
}

}  // namespace detail

// Joint estimate over the shared samples: success means every location's
// sigma_min is at or below its threshold delta_i * n^{-1/2}.
inline TailEstimate estimate_joint(const SigmaMinSamples& s, const std::vector<double>& deltas,
                                   double level = 0.95) {
  detail::check_deltas(s, deltas);
  const double inv_root_n = 1.0 / std::sqrt(static_cast<double>(s.n));
  const std::size_t d = s.lambdas.size();
  std::uint64_t succ = 0, eff = 0;
  for (std::uint64_t t = 0; t < s.requested_trials; ++t) {
    const double first = s.values[t * d];
    if (std::isnan(first)) continue;  // failed trial
    ++eff;
    bool all = true;
    for (std::size_t i = 0; i < d; ++i)
      if (!(s.values[t * d + i] <= deltas[i] * inv_root_n)) {
        all = false;
        break;
      }
    if (all) ++succ;
  }
  if (eff == 0) throw std::runtime_error("estimate_joint: no successful trials");
  return make_tail_estimate(succ, eff, level);
}

inline TailEstimate estimate_marginal(const SigmaMinSamples& s, std::size_t location,
                                      double delta, double level = 0.95) {
  if (location >= s.lambdas.size())
    throw std::invalid_argument("estimate_marginal: location index out of range");
  if (!(delta >= 0.0)) throw std::invalid_argument("estimate_marginal: delta must be nonnegative");
  const double thr = delta / std::sqrt(static_cast<double>(s.n));
  const std::size_t d = s.lambdas.size();
  std::uint64_t succ = 0, eff = 0;
  for (std::uint64_t t = 0; t < s.requested_trials; ++t) {
    const double v = s.values[t * d + location];
    if (std::isnan(v)) continue;
    ++eff;
    if (v <= thr) ++succ;
  }
  if (eff == 0) throw std::runtime_error("estimate_marginal: no successful trials");
  return make_tail_estimate(succ, eff, level);
}

// Convenience one-shot joint estimate.
inline TailEstimate estimate_joint(const EnsembleSpec& spec, const LocationSet& locations,
                                   const std::vector<double>& deltas, std::uint64_t trials,
                                   double level = 0.95, int workers = 0) {
  const auto samples = run_sigma_min_samples(spec, locations.lambdas, trials, workers);
  return estimate_joint(samples, deltas, level);
}

struct FactorizationResult {
  TailEstimate joint;
  std::vector<TailEstimate> marginals;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();
  bool undefined = false;  // some estimate is zero; ratio not computable
};

// Ratio p_joint / prod_i p_marginal_i over the SAME trial set, with a
// delta-method confidence interval for log(ratio) computed from per-trial
// influence values (the estimates are correlated, all being functions of
// one sample).
inline FactorizationResult factorization_ratio(const SigmaMinSamples& s,
                                               const std::vector<double>& deltas,
                                               double level = 0.95) {
  detail::check_deltas(s, deltas);
  FactorizationResult r;
  r.joint = estimate_joint(s, deltas, level);
  const std::size_t d = s.lambdas.size();
  for (std::size_t i = 0; i < d; ++i)
    r.marginals.push_back(estimate_marginal(s, i, deltas[i], level));

  double prod = 1.0;
  for (const auto& m : r.marginals) prod *= m.p_hat;
  if (r.joint.p_hat == 0.0 || prod == 0.0) {
    r.undefined = true;
    return r;
  }
  r.ratio = r.joint.p_hat / prod;

  // Influence of trial t on log ratio: Z_J/p_J - sum_i Z_i/p_i.
  const double inv_root_n = 1.0 / std::sqrt(static_cast<double>(s.n));
  double sum_u = 0.0, sum_u2 = 0.0;
  std::uint64_t eff = 0;
  for (std::uint64_t t = 0; t < s.requested_trials; ++t) {
    if (std::isnan(s.values[t * d])) continue;
    ++eff;
    bool all = true;
    double u = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const bool hit = s.values[t * d + i] <= deltas[i] * inv_root_n;
      if (hit) u -= 1.0 / r.marginals[i].p_hat;
      all = all && hit;
    }
    if (all) u += 1.0 / r.joint.p_hat;
    sum_u += u;
    sum_u2 += u * u;
  }
  const double nT = static_cast<double>(eff);
  const double var_u = std::max(0.0, sum_u2 / nT - (sum_u / nT) * (sum_u / nT));
  const double se_log = std::sqrt(var_u / nT);
  const double z = normal_two_sided_quantile(level);
  r.ci_lo = r.ratio * std::exp(-z * se_log);
  r.ci_hi = r.ratio * std::exp(z * se_log);
  return r;
}

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_stderr = 0.0;
  std::size_t points_used = 0;
};

// Log-log regression of p_hat against delta.  Zero-success points carry no
// usable log-probability and are excluded; at least two must survive.
inline ScalingFit fit_scaling(const std::vector<double>& deltas,
                              const std::vector<TailEstimate>& estimates) {
  if (deltas.size() != estimates.size())
    throw std::invalid_argument("fit_scaling: grid and estimates must align");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (estimates[i].successes == 0) continue;
    if (!(deltas[i] > 0.0)) throw std::invalid_argument("fit_scaling: deltas must be positive");
    x.push_back(std::log(deltas[i]));
    y.push_back(std::log(estimates[i].p_hat));
  }
  if (x.size() < 2)
    throw std::runtime_error("fit_scaling: fewer than two nonzero estimates");
  const OlsFit f = ols_fit(x, y);
  ScalingFit out;
  out.slope = f.slope;
  out.intercept = f.intercept;
  out.r_squared = f.r_squared;
  out.slope_stderr = f.slope_stderr;
  out.points_used = f.points;
  return out;
}

// ----------------------------------------------------------------------------
// Mesoscopic separation experiment.
//
// Locations are placed around center_energy * sqrt(n) with consecutive
// spacing exactly delta_sep * n^{sep_exponent - 1/2}; sep_exponent = 1
// reproduces the macroscopic experiment identically (same estimator on the
// same locations and seeds).

struct MesoscopicConfig {
  EntryDistribution entry{};
  double diag_scale = 1.4142135623730951;  // sqrt(2)
  std::uint64_t master_seed = 0;
  std::vector<int> n_grid;
  int d = 2;
  double center_energy = 0.7;   // normalized position of the location cluster
  double kappa = 0.5;
  double delta_sep = 1.0;
  double sep_exponent = 0.5;
  std::vector<double> deltas;   // per-location thresholds
  std::uint64_t trials = 0;
  double ci_level = 0.95;
  int workers = 0;
};

struct MesoscopicRow {
  int n = 0;
  double separation = 0.0;
  std::vector<double> lambdas;
  FactorizationResult factorization;
};

inline std::vector<double> mesoscopic_lambdas(int n, int d, double center_energy,
                                              double delta_sep, double sep_exponent) {
  const double sep = required_separation(delta_sep, sep_exponent, n);
  const double center = center_energy * std::sqrt(static_cast<double>(n));
  std::vector<double> lambdas(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j)
    lambdas[static_cast<std::size_t>(j)] =
        center + (static_cast<double>(j) - 0.5 * static_cast<double>(d - 1)) * sep;
  return lambdas;
}

inline std::vector<MesoscopicRow> mesoscopic_experiment(const MesoscopicConfig& cfg) {
  if (cfg.n_grid.empty()) throw std::invalid_argument("mesoscopic: empty n grid");
  if (cfg.d < 1) throw std::invalid_argument("mesoscopic: d must be >= 1");
  if (cfg.deltas.size() != static_cast<std::size_t>(cfg.d))
    throw std::invalid_argument("mesoscopic: deltas must match d");
  std::vector<MesoscopicRow> rows;
  for (int n : cfg.n_grid) {
    EnsembleSpec spec;
    spec.n = n;
    spec.entry = cfg.entry;
    spec.diag_scale = cfg.diag_scale;
    spec.master_seed = cfg.master_seed;
    MesoscopicRow row;
    row.n = n;
    row.separation = required_separation(cfg.delta_sep, cfg.sep_exponent, n);
    row.lambdas = mesoscopic_lambdas(n, cfg.d, cfg.center_energy, cfg.delta_sep,
                                     cfg.sep_exponent);
    // Validates bulk membership and the separation scale.
    make_location_set(row.lambdas, cfg.kappa, cfg.delta_sep, cfg.sep_exponent, n);
    const auto samples = run_sigma_min_samples(spec, row.lambdas, cfg.trials, cfg.workers);
    row.factorization = factorization_ratio(samples, cfg.deltas, cfg.ci_level);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace rmtlab
