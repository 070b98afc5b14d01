#pragma once

// Experiment runner: validates a config, executes the experiment with
// deterministic parallelism, persists CSV/JSON outputs crash-safely
// (`.partial` until complete, manifest last), and reports an exit code:
//   0  success
//   2  validation error (nothing written)
//   3  a gated check failed (outputs written)
//   4  eigensolver failure budget exceeded (> 0.1% of trials)
//
// All numeric output depends only on (config, master_seed); worker count and
// wall-clock timestamps never reach the CSV files.

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rmtlab/config.hpp"
#include "rmtlab/io.hpp"
#include "rmtlab/oracles.hpp"
#include "rmtlab/relations.hpp"
#include "rmtlab/rigidity.hpp"
#include "rmtlab/smallball.hpp"
#include "rmtlab/version.hpp"

namespace rmtlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitCheckFailure = 3;
inline constexpr int kExitSolverBudget = 4;

// Thrown when eigensolver failures exceed 0.1% of the requested trials.
struct BudgetExceeded : std::runtime_error {
  BudgetExceeded(std::uint64_t failed_, std::uint64_t trials_)
      : std::runtime_error("solver failures (" + std::to_string(failed_) + " of " +
                           std::to_string(trials_) + " trials) exceed the 0.1% budget"),
        failed(failed_),
        trials(trials_) {}
  std::uint64_t failed;
  std::uint64_t trials;
};

struct RunOutcome {
  int exit_code = kExitOk;
  std::vector<Diagnostic> diagnostics;
  std::filesystem::path manifest_path;
  nlohmann::json manifest;
};

namespace detail {

inline void enforce_budget(std::uint64_t failed, std::uint64_t trials) {
  if (failed * 1000 > trials) throw BudgetExceeded(failed, trials);
}

inline std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

inline nlohmann::json fit_to_json(const ScalingFit& f) {
  return {{"slope", f.slope},
          {"intercept", f.intercept},
          {"r_squared", f.r_squared},
          {"slope_stderr", f.slope_stderr},
          {"points_used", f.points_used}};
}

inline nlohmann::json tail_to_json(const TailEstimate& e) {
  return {{"trials", e.trials},
          {"successes", e.successes},
          {"p_hat", e.p_hat},
          {"ci_lo", e.ci_lo},
          {"ci_hi", e.ci_hi}};
}

// Shared context handed to the per-experiment drivers.
struct RunContext {
  const ExperimentConfig& cfg;
  std::filesystem::path dir;
  nlohmann::json summary;
  std::vector<std::string> files;  // basenames, committed files only
  std::uint64_t failed_trials = 0;
  bool gates_ok = true;

  std::filesystem::path path(const std::string& name) const { return dir / name; }
  void add_file(const std::string& name) { files.push_back(name); }
};

// ---------------------------------------------------------------------------
// sample: eigenvalue rows, optionally binary spectra.

inline void run_sample(RunContext& ctx) {
  const ExperimentConfig& c = ctx.cfg;
  const std::uint64_t trials = static_cast<std::uint64_t>(c.trials);
  struct Row {
    std::uint64_t seed = 0;
    Eigen::VectorXd evals;
    bool failed = false;
  };
  std::vector<Row> rows(trials);
  parallel_for_index(trials, c.workers, [&](std::uint64_t t) {
    const SampledMatrix m = sample_matrix(c.ensemble, t);
    rows[t].seed = m.seed;
    try {
      Spectrum s = decompose(m);
      rows[t].evals = std::move(s.eigenvalues);
    } catch (const SolverFailure&) {
      rows[t].failed = true;
    }
  });
  for (const Row& r : rows)
    if (r.failed) ++ctx.failed_trials;
  enforce_budget(ctx.failed_trials, trials);

  CsvFile csv(ctx.path("eigenvalues.csv"));
  csv.row({"n", "trial", "seed", "eigenvalues"});
  for (std::uint64_t t = 0; t < trials; ++t) {
    if (rows[t].failed) continue;
    std::vector<double> e(rows[t].evals.data(), rows[t].evals.data() + rows[t].evals.size());
    csv.row({std::to_string(c.ensemble.n), std::to_string(t), std::to_string(rows[t].seed),
             join_semicolon(e)});
  }
  csv.commit();
  ctx.add_file("eigenvalues.csv");

  if (c.save_spectra) {
    for (std::uint64_t t = 0; t < trials; ++t) {
      if (rows[t].failed) continue;
      Spectrum s;
      s.n = c.ensemble.n;
      s.seed = rows[t].seed;
      s.eigenvalues = rows[t].evals;
      char name[32];
      std::snprintf(name, sizeof(name), "spectrum_%06llu.bin",
                    static_cast<unsigned long long>(t));
      save_spectrum(ctx.path(name), s);
      ctx.add_file(name);
    }
  }
  ctx.summary["trials"] = trials;
  ctx.summary["failed_trials"] = ctx.failed_trials;
  ctx.summary["headline"] = "sampled " + std::to_string(trials - ctx.failed_trials) +
                            " spectra at n = " + std::to_string(c.ensemble.n);
}

// ---------------------------------------------------------------------------
// smallball: shared sigma_min samples, per-delta estimates, factorization,
// log-log fit.

inline void run_smallball(RunContext& ctx) {
  const ExperimentConfig& c = ctx.cfg;
  const std::size_t d = c.lambdas.size();
  const SigmaMinSamples samples =
      run_sigma_min_samples(c.ensemble, c.lambdas,
                            static_cast<std::uint64_t>(c.trials), c.workers);
  ctx.failed_trials = samples.failed_trials;
  enforce_budget(samples.failed_trials, samples.requested_trials);

  CsvFile csv(ctx.path("smallball.csv"));
  csv.row({"n", "d", "lambdas", "deltas", "trials", "successes", "p_hat", "ci_lo", "ci_hi",
           "loc_successes"});
  std::optional<CsvFile> fact_csv;
  if (d >= 2) {
    fact_csv.emplace(ctx.path("factorization.csv"));
    fact_csv->row({"n", "d", "lambdas", "deltas", "trials", "ratio", "ci_lo", "ci_hi",
                   "undefined"});
  }

  std::vector<TailEstimate> joints;
  nlohmann::json per_delta = nlohmann::json::array();
  for (double delta : c.delta_grid) {
    const std::vector<double> deltas(d, delta);
    const TailEstimate joint = estimate_joint(samples, deltas, c.ci_level);
    joints.push_back(joint);
    std::vector<std::uint64_t> loc_succ;
    for (std::size_t i = 0; i < d; ++i)
      loc_succ.push_back(estimate_marginal(samples, i, delta, c.ci_level).successes);
    csv.row({std::to_string(c.ensemble.n), std::to_string(d), join_semicolon(c.lambdas),
             join_semicolon(deltas), std::to_string(joint.trials),
             std::to_string(joint.successes), format_double(joint.p_hat),
             format_double(joint.ci_lo), format_double(joint.ci_hi),
             join_semicolon_u64(loc_succ)});
    nlohmann::json jd = tail_to_json(joint);
    jd["delta"] = delta;
    if (fact_csv) {
      const FactorizationResult f = factorization_ratio(samples, deltas, c.ci_level);
      fact_csv->row({std::to_string(c.ensemble.n), std::to_string(d),
                     join_semicolon(c.lambdas), join_semicolon(deltas),
                     std::to_string(f.joint.trials), format_double(f.ratio),
                     format_double(f.ci_lo), format_double(f.ci_hi),
                     f.undefined ? "1" : "0"});
      jd["ratio"] = f.ratio;
      jd["ratio_ci"] = {f.ci_lo, f.ci_hi};
      jd["ratio_undefined"] = f.undefined;
    }
    per_delta.push_back(jd);
  }
  csv.commit();
  ctx.add_file("smallball.csv");
  if (fact_csv) {
    fact_csv->commit();
    ctx.add_file("factorization.csv");
  }

  nlohmann::json fit_json;
  fit_json["ci_level"] = c.ci_level;
  nlohmann::json excluded = nlohmann::json::array();
  for (std::size_t i = 0; i < joints.size(); ++i)
    if (joints[i].successes == 0) excluded.push_back(c.delta_grid[i]);
  fit_json["excluded_deltas"] = excluded;
  std::string headline;
  try {
    const ScalingFit fit = fit_scaling(c.delta_grid, joints);
    fit_json.update(fit_to_json(fit));
    char buf[96];
    std::snprintf(buf, sizeof(buf), "joint slope %.3f (r^2 %.4f) over %zu deltas",
                  fit.slope, fit.r_squared, c.delta_grid.size());
    headline = buf;
  } catch (const std::exception& e) {
    fit_json["error"] = e.what();
    headline = "fit unavailable: " + std::string(e.what());
  }
  {
    AtomicFile f(ctx.path("fit.json"));
    f.stream() << fit_json.dump(2) << "\n";
    f.commit();
    ctx.add_file("fit.json");
  }
  ctx.summary["per_delta"] = per_delta;
  ctx.summary["fit"] = fit_json;
  ctx.summary["headline"] = headline;
}

// ---------------------------------------------------------------------------
// rigidity: per-location envelope reports; optional semicircle distances.

inline void run_rigidity(RunContext& ctx) {
  const ExperimentConfig& c = ctx.cfg;
  CsvFile csv(ctx.path("envelope.csv"));
  csv.row({"n", "lambda", "k", "envelope_min", "envelope_max", "samples"});
  nlohmann::json per_lambda = nlohmann::json::array();
  double overall_min = std::numeric_limits<double>::infinity();
  double overall_max = 0.0;
  for (double lambda : c.lambdas) {
    const RigidityReport rep = envelope_report(c.ensemble, lambda, c.k_lo, c.k_hi,
                                               c.samples, c.moment_p, c.workers);
    for (int k = rep.k_lo; k <= rep.k_hi; ++k) {
      const std::size_t idx = static_cast<std::size_t>(k - rep.k_lo);
      csv.row({std::to_string(rep.n), format_double(lambda), std::to_string(k),
               format_double(rep.envelope_min[idx]), format_double(rep.envelope_max[idx]),
               std::to_string(rep.samples)});
      overall_min = std::min(overall_min, rep.envelope_min[idx]);
      overall_max = std::max(overall_max, rep.envelope_max[idx]);
    }
    per_lambda.push_back({{"lambda", lambda},
                          {"ratio_tail_freq", rep.ratio_tail_freq},
                          {"moment_p", rep.moment_p},
                          {"moment_estimates", rep.moment_estimates}});
  }
  csv.commit();
  ctx.add_file("envelope.csv");

  nlohmann::json rig_json;
  rig_json["per_lambda"] = per_lambda;
  rig_json["envelope_overall_min"] = overall_min;
  rig_json["envelope_overall_max"] = overall_max;

  if (c.grid_size >= 16) {
    CsvFile dist_csv(ctx.path("distances.csv"));
    dist_csv.row({"n", "sample", "w1", "grid_bl", "grid_size"});
    std::vector<SemicircleDistance> dists(static_cast<std::size_t>(c.samples));
    parallel_for_index(static_cast<std::uint64_t>(c.samples), c.workers,
                       [&](std::uint64_t t) {
                         const Spectrum s = decompose(sample_matrix(c.ensemble, t));
                         dists[t] = distance_to_semicircle(s, c.grid_size);
                       });
    std::vector<double> w1s, bls;
    for (std::uint64_t t = 0; t < dists.size(); ++t) {
      dist_csv.row({std::to_string(c.ensemble.n), std::to_string(t),
                    format_double(dists[t].w1), format_double(dists[t].grid_bl),
                    std::to_string(c.grid_size)});
      w1s.push_back(dists[t].w1);
      bls.push_back(dists[t].grid_bl);
    }
    dist_csv.commit();
    ctx.add_file("distances.csv");
    rig_json["w1_median"] = median(w1s);
    rig_json["grid_bl_median"] = median(bls);
  }

  {
    AtomicFile f(ctx.path("rigidity.json"));
    f.stream() << rig_json.dump(2) << "\n";
    f.commit();
    ctx.add_file("rigidity.json");
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "envelope k*mu_k/sqrt(n) in [%.4g, %.4g]", overall_min,
                overall_max);
  ctx.summary = rig_json;
  ctx.summary["headline"] = std::string(buf);
}

// ---------------------------------------------------------------------------
// relations: per-(n, sample) exact minima and the log-log scaling fit.

inline void run_relations(RunContext& ctx) {
  const ExperimentConfig& c = ctx.cfg;
  RelationSpec spec;
  spec.coefficients = c.coefficients;
  spec.offset = c.offset;
  spec.kappa = c.kappa;
  spec.delta_sep = c.delta_sep;
  spec.sep_exponent = c.sep_exponent;
  const SpectrumFamily family =
      ensemble_family(c.ensemble.entry, c.ensemble.diag_scale, c.ensemble.master_seed);
  const RelationScalingResult res =
      scaling_vs_n_detailed(spec, family, c.n_grid, c.samples_per_n, c.workers);

  CsvFile csv(ctx.path("relations.csv"));
  csv.row({"n", "sample", "min_value", "argmin_tuple", "tuple_count"});
  for (const RelationScalingRow& row : res.rows) {
    for (std::size_t s = 0; s < row.min_values.size(); ++s) {
      csv.row({std::to_string(row.n), std::to_string(s), format_double(row.min_values[s]),
               join_semicolon(row.argmin_tuples[s]), std::to_string(row.tuple_counts[s])});
    }
  }
  csv.commit();
  ctx.add_file("relations.csv");

  nlohmann::json fit_json;
  nlohmann::json rows = nlohmann::json::array();
  for (const RelationScalingRow& row : res.rows)
    rows.push_back({{"n", row.n},
                    {"median_min", row.median_min},
                    {"samples_used", row.samples_used},
                    {"samples_excluded", row.samples_excluded}});
  fit_json["per_n"] = rows;
  std::string headline;
  if (res.fit_ok) {
    fit_json.update(fit_to_json(res.fit));
    char buf[96];
    std::snprintf(buf, sizeof(buf), "median-min slope %.3f vs log n over %zu dims",
                  res.fit.slope, c.n_grid.size());
    headline = buf;
  } else {
    fit_json["error"] = res.fit_error;
    headline = "fit unavailable: " + res.fit_error;
  }
  {
    AtomicFile f(ctx.path("relations_fit.json"));
    f.stream() << fit_json.dump(2) << "\n";
    f.commit();
    ctx.add_file("relations_fit.json");
  }
  ctx.summary["fit"] = fit_json;
  ctx.summary["headline"] = headline;
}

// ---------------------------------------------------------------------------
// oracle: the verification suite; gated.

inline void run_oracle(RunContext& ctx) {
  const ExperimentConfig& c = ctx.cfg;
  std::vector<std::string> checks = c.oracle_checks;
  if (checks.empty())
    checks = {"distance_identity", "sigma_min_bound", "product_inequality",
              "region_volume_d2"};
  const std::uint64_t seed = c.ensemble.master_seed;

  CsvFile csv(ctx.path("oracle.csv"));
  csv.row({"check", "passed", "instances", "max_abs_error", "max_rel_error", "worst_seed",
           "note"});
  nlohmann::json results;
  auto identity_row = [&](const std::string& name, const IdentityCheckResult& r,
                          bool passed, const std::string& note) {
    csv.row({name, passed ? "1" : "0", std::to_string(r.instances),
             format_double(r.max_abs_error), format_double(r.max_rel_error),
             std::to_string(r.worst_seed), note});
    results[name] = {{"passed", passed},
                     {"instances", r.instances},
                     {"skipped", r.skipped},
                     {"max_abs_error", r.max_abs_error},
                     {"max_rel_error", r.max_rel_error},
                     {"worst_seed", r.worst_seed},
                     {"worst_trial", r.worst_trial}};
    if (!passed) ctx.gates_ok = false;
  };

  for (const std::string& name : checks) {
    if (name == "distance_identity") {
      const auto r = distance_identity_check(c.oracle_n, static_cast<int>(c.instances),
                                             seed, c.workers);
      identity_row(name, r, r.max_rel_error <= kIdentityTol,
                   "skipped=" + std::to_string(r.skipped));
    } else if (name == "sigma_min_bound") {
      const auto r = sigma_min_distance_bound_check(c.oracle_n,
                                                    static_cast<int>(c.instances), seed,
                                                    c.workers);
      identity_row(name, r, r.max_abs_error <= kIdentityTol, "violation beyond tolerance");
    } else if (name == "product_inequality") {
      const auto r = product_inequality_check(c.d, c.oracle_n,
                                              static_cast<int>(c.instances), seed,
                                              c.workers);
      identity_row(name, r, r.max_abs_error <= kIdentityTol,
                   "d=" + std::to_string(c.d));
    } else if (name == "region_volume_d2" || name == "region_volume_d3" ||
               name == "region_volume_d4") {
      const int d = name.back() - '0';
      const auto rows = region_volume_check(d, c.s_grid, c.mc_trials, seed, c.workers);
      bool passed = true;
      double max_abs = 0.0, max_rel = 0.0;
      nlohmann::json jrows = nlohmann::json::array();
      for (const auto& row : rows) {
        passed = passed && row.passed;
        max_abs = std::max(max_abs, std::fabs(row.reference - row.mc_volume));
        if (row.reference > 0.0)
          max_rel = std::max(max_rel,
                             std::fabs(row.reference - row.mc_volume) / row.reference);
        jrows.push_back({{"s", row.s},
                         {"reference", row.reference},
                         {"mc_volume", row.mc_volume},
                         {"mc_se", row.mc_se},
                         {"passed", row.passed}});
      }
      csv.row({name, passed ? "1" : "0", std::to_string(c.mc_trials),
               format_double(max_abs), format_double(max_rel), std::to_string(seed),
               "gate: |reference - mc| <= 3 se"});
      results[name] = {{"passed", passed}, {"rows", jrows}};
      if (!passed) ctx.gates_ok = false;
    } else if (name == "hanson_wright") {
      const Eigen::MatrixXd m = detail::iid_gaussian_matrix(50, derive_seed(seed, 0, 17));
      const std::vector<double> t_grid =
          c.t_grid.empty() ? std::vector<double>{0.5, 1.0, 2.0} : c.t_grid;
      const auto r =
          hanson_wright_check(m, c.ensemble.entry, c.mc_trials, t_grid, seed, c.workers);
      nlohmann::json jrows = nlohmann::json::array();
      for (const auto& row : r.rows) jrows.push_back({{"t", row.t}, {"tail", row.frequency}});
      csv.row({name, r.passed ? "1" : "0", std::to_string(c.mc_trials),
               format_double(r.tail_at_4op), format_double(0.0), std::to_string(seed),
               "gate: tail at 4*op_norm <= 0.05"});
      results[name] = {{"passed", r.passed},
                       {"hs_norm", r.hs_norm},
                       {"op_norm", r.op_norm},
                       {"tail_at_4op", r.tail_at_4op},
                       {"rows", jrows}};
      if (!r.passed) ctx.gates_ok = false;
    } else if (name == "decoupling") {
      const int n = std::min(c.oracle_n, 8);
      Eigen::MatrixXd m = detail::iid_gaussian_matrix(n, derive_seed(seed, 1, 17));
      m = ((m + m.transpose()) / (2.0 * n)).eval();
      const Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
      EntryDistribution dist = c.ensemble.entry;
      if (dist.kind != EntryKind::gaussian_divisible) {
        dist.kind = EntryKind::gaussian_divisible;
        dist.sigma0 = 0.5;
        dist.base_kind = BaseKind::uniform_centered;
      }
      const auto r = decoupling_check(n, c.theta, m, u, c.inner_trials, c.outer_trials,
                                      dist, seed, c.workers);
      csv.row({name, r.passed ? "1" : "0", std::to_string(c.outer_trials),
               format_double(r.margin), format_double(r.bias_bound), std::to_string(seed),
               "gate: margin >= bias_bound - 3 se"});
      results[name] = {{"passed", r.passed},
                       {"lhs", r.lhs},
                       {"rhs", r.rhs},
                       {"margin", r.margin},
                       {"margin_se", r.margin_se},
                       {"bias_bound", r.bias_bound},
                       {"rhs_alternative", r.rhs_alternative}};
      if (!r.passed) ctx.gates_ok = false;
    } else if (name == "operator_norm_tail") {
      EnsembleSpec spec = c.ensemble;
      if (spec.n < 1) spec = goe(200, seed);
      const int trials = c.trials >= 100 ? static_cast<int>(c.trials) : 1000;
      const std::vector<double> t_grid =
          c.t_grid.empty() ? std::vector<double>{0.0, 0.5, 1.0} : c.t_grid;
      const auto rows = operator_norm_tail(spec, trials, t_grid, c.workers);
      nlohmann::json jrows = nlohmann::json::array();
      for (const auto& row : rows)
        jrows.push_back(
            {{"t", row.t}, {"threshold", row.threshold}, {"frequency", row.frequency}});
      csv.row({name, "1", std::to_string(trials), format_double(0.0), format_double(0.0),
               std::to_string(seed), "informational; no gate"});
      results[name] = {{"passed", true}, {"rows", jrows}};
    }
  }
  csv.commit();
  ctx.add_file("oracle.csv");
  {
    AtomicFile f(ctx.path("oracle.json"));
    f.stream() << results.dump(2) << "\n";
    f.commit();
    ctx.add_file("oracle.json");
  }
  ctx.summary["checks"] = results;
  ctx.summary["headline"] =
      std::string(ctx.gates_ok ? "all checks passed" : "CHECK FAILURE") + " (" +
      std::to_string(checks.size()) + " checks)";
}

// ---------------------------------------------------------------------------
// mesoscopic: location clusters at separation exponent sigma, shared samples
// per n, estimates for every delta in the grid.

inline void run_mesoscopic(RunContext& ctx) {
  const ExperimentConfig& c = ctx.cfg;
  const std::size_t d = static_cast<std::size_t>(c.d);

  CsvFile csv(ctx.path("mesoscopic.csv"));
  csv.row({"n", "separation", "d", "lambdas", "deltas", "trials", "successes", "p_hat",
           "ci_lo", "ci_hi", "loc_successes"});
  std::optional<CsvFile> fact_csv;
  if (d >= 2) {
    fact_csv.emplace(ctx.path("mesoscopic_factorization.csv"));
    fact_csv->row({"n", "separation", "d", "lambdas", "deltas", "trials", "ratio", "ci_lo",
                   "ci_hi", "undefined"});
  }

  nlohmann::json per_n = nlohmann::json::array();
  for (int n : c.n_grid) {
    EnsembleSpec spec = c.ensemble;
    spec.n = n;
    const double separation = required_separation(c.delta_sep, c.sep_exponent, n);
    const std::vector<double> lambdas =
        mesoscopic_lambdas(n, c.d, c.center_energy, c.delta_sep, c.sep_exponent);
    make_location_set(lambdas, c.kappa, c.delta_sep, c.sep_exponent, n);
    const SigmaMinSamples samples = run_sigma_min_samples(
        spec, lambdas, static_cast<std::uint64_t>(c.trials), c.workers);
    ctx.failed_trials += samples.failed_trials;
    enforce_budget(samples.failed_trials, samples.requested_trials);

    nlohmann::json per_delta = nlohmann::json::array();
    for (double delta : c.delta_grid) {
      const std::vector<double> deltas(d, delta);
      const TailEstimate joint = estimate_joint(samples, deltas, c.ci_level);
      std::vector<std::uint64_t> loc_succ;
      for (std::size_t i = 0; i < d; ++i)
        loc_succ.push_back(estimate_marginal(samples, i, delta, c.ci_level).successes);
      csv.row({std::to_string(n), format_double(separation), std::to_string(d),
               join_semicolon(lambdas), join_semicolon(deltas),
               std::to_string(joint.trials), std::to_string(joint.successes),
               format_double(joint.p_hat), format_double(joint.ci_lo),
               format_double(joint.ci_hi), join_semicolon_u64(loc_succ)});
      nlohmann::json jd = tail_to_json(joint);
      jd["delta"] = delta;
      if (fact_csv) {
        const FactorizationResult f = factorization_ratio(samples, deltas, c.ci_level);
        fact_csv->row({std::to_string(n), format_double(separation), std::to_string(d),
                       join_semicolon(lambdas), join_semicolon(deltas),
                       std::to_string(f.joint.trials), format_double(f.ratio),
                       format_double(f.ci_lo), format_double(f.ci_hi),
                       f.undefined ? "1" : "0"});
        jd["ratio"] = f.ratio;
        jd["ratio_ci"] = {f.ci_lo, f.ci_hi};
        jd["ratio_undefined"] = f.undefined;
      }
      per_delta.push_back(jd);
    }
    per_n.push_back({{"n", n},
                     {"separation", separation},
                     {"lambdas", lambdas},
                     {"per_delta", per_delta}});
  }
  csv.commit();
  ctx.add_file("mesoscopic.csv");
  if (fact_csv) {
    fact_csv->commit();
    ctx.add_file("mesoscopic_factorization.csv");
  }
  ctx.summary["per_n"] = per_n;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "mesoscopic sweep: %zu dims x %zu deltas, sigma=%.3g",
                c.n_grid.size(), c.delta_grid.size(), c.sep_exponent);
  ctx.summary["headline"] = std::string(buf);
}

}  // namespace detail

// Serializes the effective config back into the flat key dialect.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["experiment"] = to_string(c.kind);
  j["n"] = c.ensemble.n;
  j["entry_kind"] = to_string(c.ensemble.entry.kind);
  j["entry_variance"] = c.ensemble.entry.variance;
  if (c.ensemble.entry.kind == EntryKind::gaussian_divisible) {
    j["sigma0"] = c.ensemble.entry.sigma0;
    j["base_kind"] = to_string(c.ensemble.entry.base_kind);
  }
  j["diag_scale"] = c.ensemble.diag_scale;
  j["master_seed"] = c.ensemble.master_seed;
  if (!c.lambdas.empty()) j["lambdas"] = c.lambdas;
  j["kappa"] = c.kappa;
  j["delta_sep"] = c.delta_sep;
  j["sep_exponent"] = c.sep_exponent;
  if (!c.coefficients.empty()) {
    j["coefficients"] = c.coefficients;
    j["offset"] = c.offset;
  }
  if (!c.delta_grid.empty()) j["delta_grid"] = c.delta_grid;
  if (!c.n_grid.empty()) j["n_grid"] = c.n_grid;
  if (!c.t_grid.empty()) j["t_grid"] = c.t_grid;
  if (c.k_hi > 0) {
    j["k_lo"] = c.k_lo;
    j["k_hi"] = c.k_hi;
  }
  if (!c.moment_p.empty()) j["moment_p"] = c.moment_p;
  if (c.trials > 0) j["trials"] = c.trials;
  if (c.samples > 0) j["samples"] = c.samples;
  if (c.samples_per_n > 0) j["samples_per_n"] = c.samples_per_n;
  j["ci_level"] = c.ci_level;
  j["workers"] = c.workers;
  j["out"] = c.out_dir;
  if (c.grid_size > 0) j["grid_size"] = c.grid_size;
  if (c.kind == ExperimentKind::mesoscopic) {
    j["center_energy"] = c.center_energy;
    j["d"] = c.d;
  }
  if (c.kind == ExperimentKind::oracle) {
    j["oracle_checks"] = c.oracle_checks;
    j["instances"] = c.instances;
    j["oracle_n"] = c.oracle_n;
    j["d"] = c.d;
    j["inner_trials"] = c.inner_trials;
    j["outer_trials"] = c.outer_trials;
    j["theta"] = c.theta;
    j["s_grid"] = c.s_grid;
    j["mc_trials"] = c.mc_trials;
  }
  if (c.save_spectra) j["save_spectra"] = true;
  return j;
}

// Runs a validated config end to end.  Partial outputs keep a `.partial`
// suffix until complete; the manifest is written last, so its presence
// certifies a finished run.
inline RunOutcome run(const ExperimentConfig& config) {
  RunOutcome out;
  out.diagnostics = validate(config);
  if (has_errors(out.diagnostics)) {
    out.exit_code = kExitValidation;
    return out;
  }

  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);

  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["experiment"] = to_string(config.kind);
  manifest["master_seed"] = config.ensemble.master_seed;
  manifest["config"] = config_to_json(config);
  manifest["started_at"] = detail::utc_timestamp();

  detail::RunContext ctx{config, dir, nlohmann::json::object(), {}, 0, true};
  try {
    switch (config.kind) {
      case ExperimentKind::sample: detail::run_sample(ctx); break;
      case ExperimentKind::smallball: detail::run_smallball(ctx); break;
      case ExperimentKind::rigidity: detail::run_rigidity(ctx); break;
      case ExperimentKind::relations: detail::run_relations(ctx); break;
      case ExperimentKind::oracle: detail::run_oracle(ctx); break;
      case ExperimentKind::mesoscopic: detail::run_mesoscopic(ctx); break;
    }
  } catch (const BudgetExceeded& e) {
    out.diagnostics.push_back({"SOLVER_BUDGET", true, e.what()});
    out.exit_code = kExitSolverBudget;
    return out;
  } catch (const SolverFailure& e) {
    // Paths with no failure budget (for example rigidity envelopes, which need
    // every requested sample) abort on the first eigensolver failure.
    out.diagnostics.push_back({"SOLVER_FAILURE", true, e.what()});
    out.exit_code = kExitSolverBudget;
    return out;
  }

  manifest["finished_at"] = detail::utc_timestamp();
  manifest["files"] = ctx.files;
  manifest["failed_trials"] = ctx.failed_trials;
  manifest["summary"] = ctx.summary;

  AtomicFile mf(dir / "manifest.json");
  mf.stream() << manifest.dump(2) << "\n";
  mf.commit();

  out.manifest_path = dir / "manifest.json";
  out.manifest = manifest;
  out.exit_code = ctx.gates_ok ? kExitOk : kExitCheckFailure;
  return out;
}

// ---------------------------------------------------------------------------
// report: renders a markdown summary table from one or more manifests.

inline std::string render_report(const std::vector<std::filesystem::path>& inputs) {
  std::string md;
  md += "| experiment | version | master_seed | finished | result | files |\n";
  md += "|---|---|---|---|---|---|\n";
  for (std::filesystem::path p : inputs) {
    if (std::filesystem::is_directory(p)) p /= "manifest.json";
    std::ifstream is(p);
    nlohmann::json m;
    if (is) m = nlohmann::json::parse(is, nullptr, /*allow_exceptions=*/false);
    if (!is || m.is_discarded() || !m.is_object()) {
      md += "| (unreadable) |  |  |  | cannot read " + p.string() + " |  |\n";
      continue;
    }
    auto str = [&](const char* key) {
      return m.contains(key) && m[key].is_string() ? m[key].get<std::string>() : "";
    };
    std::string seed = m.contains("master_seed") ? m["master_seed"].dump() : "";
    std::string headline;
    if (m.contains("summary") && m["summary"].is_object() &&
        m["summary"].contains("headline") && m["summary"]["headline"].is_string())
      headline = m["summary"]["headline"].get<std::string>();
    std::string files;
    if (m.contains("files") && m["files"].is_array()) {
      for (const auto& f : m["files"]) {
        if (!files.empty()) files += "; ";
        if (f.is_string()) files += f.get<std::string>();
      }
    }
    md += "| " + str("experiment") + " | " + str("version") + " | " + seed + " | " +
          str("finished_at") + " | " + headline + " | " + files + " |\n";
  }
  return md;
}

}  // namespace rmtlab
