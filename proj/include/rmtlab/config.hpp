#pragma once

// Experiment configuration: a flat JSON object with typed fields, parsed
// into ExperimentConfig and validated into a list of machine-readable
// diagnostics.  Validation never throws; an empty diagnostic list (or
// warnings only) means the config is runnable.
//
// Key reference (all optional unless required by the chosen experiment):
//   experiment        string   sample | smallball | rigidity | relations |
//                              oracle | mesoscopic
//   n                 int      matrix dimension
//   entry_kind        string   gaussian | uniform_centered | rademacher |
//                              gaussian_divisible
//   entry_variance    real     off-diagonal entry variance (> 0)
//   sigma0            real     gaussian weight of a divisible entry, (0,1)
//   base_kind         string   uniform_centered | shifted_exponential_symmetrized |
//                              two_point_smoothed
//   diag_scale        real     diagonal scale factor (>= 0; sqrt(2) = GOE)
//   master_seed       uint64   root seed (integer or decimal string)
//   lambdas           [real]   evaluation locations (unnormalized)
//   kappa             real     bulk parameter
//   delta_sep, sep_exponent    separation scale Delta * n^(sigma - 1/2)
//   coefficients      [real]   relation coefficients a_i (nonzero)
//   offset            real     relation offset c
//   delta_grid        [real]   small-ball thresholds delta
//   n_grid            [int]    dimensions for scaling experiments
//   t_grid            [real]   thresholds for tail checks
//   k_lo, k_hi        int      singular-value index window
//   moment_p          [real]   inverse-power moment exponents
//   trials            int      Monte Carlo trials per estimate
//   samples           int      spectra per report (rigidity, sample)
//   samples_per_n     int      spectra per dimension (relations)
//   ci_level          real     confidence level in (0,1)
//   workers           int      worker threads (0 = auto)
//   out               string   output directory
//   grid_size         int      semicircle-distance grid nodes (0 = skip, else >= 16)
//   center_energy     real     mesoscopic cluster center, units of sqrt(n)
//   d                 int      mesoscopic location count
//   oracle_checks     [string] which oracle checks to run (empty = default suite)
//   instances         int      instances per identity check
//   oracle_n          int      matrix dimension for identity checks
//   inner_trials, outer_trials, theta    decoupling check parameters
//   s_grid            [real]   region-volume scale grid (each > 1)
//   mc_trials         int      Monte Carlo trials for volume checks
//   save_spectra      bool     sample experiment: also write binary spectra

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rmtlab/ensemble.hpp"
#include "rmtlab/smallball.hpp"
#include "rmtlab/spectral.hpp"

namespace rmtlab {

enum class ExperimentKind { sample, smallball, rigidity, relations, oracle, mesoscopic };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::sample: return "sample";
    case ExperimentKind::smallball: return "smallball";
    case ExperimentKind::rigidity: return "rigidity";
    case ExperimentKind::relations: return "relations";
    case ExperimentKind::oracle: return "oracle";
    case ExperimentKind::mesoscopic: return "mesoscopic";
  }
  return "?";
}

struct Diagnostic {
  std::string code;     // stable machine-readable identifier
  bool is_error = true; // false: warning, does not block the run
  std::string message;
};

// Short human-readable number for diagnostic messages.
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return std::string(buf);
}

inline bool has_errors(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags)
    if (d.is_error) return true;
  return false;
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::smallball;
  EnsembleSpec ensemble{};

  std::vector<double> lambdas;
  double kappa = 0.5;
  double delta_sep = 0.5;
  double sep_exponent = 1.0;

  std::vector<double> coefficients;
  double offset = 0.0;

  std::vector<double> delta_grid;
  std::vector<int> n_grid;
  std::vector<double> t_grid;
  int k_lo = 0, k_hi = 0;
  std::vector<double> moment_p;

  long long trials = 0;
  int samples = 0;
  int samples_per_n = 0;
  double ci_level = 0.95;
  int workers = 0;
  std::string out_dir = "out";

  int grid_size = 0;
  double center_energy = 0.7;
  int d = 2;

  std::vector<std::string> oracle_checks;
  long long instances = 200;
  int oracle_n = 10;
  int inner_trials = 2000, outer_trials = 500;
  double theta = 0.3;
  std::vector<double> s_grid = {1.5, 2.0, 3.0};
  int mc_trials = 200000;

  bool save_spectra = false;
};

struct ParsedConfig {
  ExperimentConfig config{};
  std::vector<Diagnostic> diagnostics;
  nlohmann::json echo;  // the object as parsed, for the manifest
};

namespace detail {

struct ConfigReader {
  const nlohmann::json& j;
  std::vector<Diagnostic>& diags;
  std::set<std::string> seen;

  bool have(const char* key) {
    seen.insert(key);
    return j.contains(key);
  }
  void type_error(const char* key, const char* want) {
    diags.push_back({"TYPE_ERROR", true,
                     std::string("key '") + key + "' must be " + want});
  }

  void get_int(const char* key, long long& out) {
    if (!have(key)) return;
    if (j[key].is_number_integer())
      out = j[key].get<long long>();
    else
      type_error(key, "an integer");
  }
  void get_int(const char* key, int& out) {
    long long v = out;
    get_int(key, v);
    out = static_cast<int>(v);
  }
  void get_real(const char* key, double& out) {
    if (!have(key)) return;
    if (j[key].is_number())
      out = j[key].get<double>();
    else
      type_error(key, "a number");
  }
  void get_bool(const char* key, bool& out) {
    if (!have(key)) return;
    if (j[key].is_boolean())
      out = j[key].get<bool>();
    else
      type_error(key, "a boolean");
  }
  void get_string(const char* key, std::string& out) {
    if (!have(key)) return;
    if (j[key].is_string())
      out = j[key].get<std::string>();
    else
      type_error(key, "a string");
  }
  void get_seed(const char* key, std::uint64_t& out) {
    if (!have(key)) return;
    if (j[key].is_number_unsigned()) {
      out = j[key].get<std::uint64_t>();
    } else if (j[key].is_number_integer() && j[key].get<long long>() >= 0) {
      out = static_cast<std::uint64_t>(j[key].get<long long>());
    } else if (j[key].is_string()) {
      try {
        out = std::stoull(j[key].get<std::string>());
      } catch (...) {
        type_error(key, "a nonnegative integer (or its decimal string)");
      }
    } else {
      type_error(key, "a nonnegative integer (or its decimal string)");
    }
  }
  void get_real_array(const char* key, std::vector<double>& out) {
    if (!have(key)) return;
    if (!j[key].is_array()) {
      type_error(key, "an array of numbers");
      return;
    }
    std::vector<double> v;
    for (const auto& e : j[key]) {
      if (!e.is_number()) {
        type_error(key, "an array of numbers");
        return;
      }
      v.push_back(e.get<double>());
    }
    out = std::move(v);
  }
  void get_int_array(const char* key, std::vector<int>& out) {
    if (!have(key)) return;
    if (!j[key].is_array()) {
      type_error(key, "an array of integers");
      return;
    }
    std::vector<int> v;
    for (const auto& e : j[key]) {
      if (!e.is_number_integer()) {
        type_error(key, "an array of integers");
        return;
      }
      v.push_back(e.get<int>());
    }
    out = std::move(v);
  }
  void get_string_array(const char* key, std::vector<std::string>& out) {
    if (!have(key)) return;
    if (!j[key].is_array()) {
      type_error(key, "an array of strings");
      return;
    }
    std::vector<std::string> v;
    for (const auto& e : j[key]) {
      if (!e.is_string()) {
        type_error(key, "an array of strings");
        return;
      }
      v.push_back(e.get<std::string>());
    }
    out = std::move(v);
  }
};

inline bool parse_entry_kind(const std::string& s, EntryKind& out) {
  if (s == "gaussian") out = EntryKind::gaussian;
  else if (s == "uniform_centered") out = EntryKind::uniform_centered;
  else if (s == "rademacher") out = EntryKind::rademacher;
  else if (s == "gaussian_divisible") out = EntryKind::gaussian_divisible;
  else return false;
  return true;
}

inline bool parse_base_kind(const std::string& s, BaseKind& out) {
  if (s == "uniform_centered") out = BaseKind::uniform_centered;
  else if (s == "shifted_exponential_symmetrized")
    out = BaseKind::shifted_exponential_symmetrized;
  else if (s == "two_point_smoothed") out = BaseKind::two_point_smoothed;
  else return false;
  return true;
}

inline bool parse_experiment_kind(const std::string& s, ExperimentKind& out) {
  if (s == "sample") out = ExperimentKind::sample;
  else if (s == "smallball") out = ExperimentKind::smallball;
  else if (s == "rigidity") out = ExperimentKind::rigidity;
  else if (s == "relations") out = ExperimentKind::relations;
  else if (s == "oracle") out = ExperimentKind::oracle;
  else if (s == "mesoscopic") out = ExperimentKind::mesoscopic;
  else return false;
  return true;
}

}  // namespace detail

// Parses a JSON text into a config; structural problems become diagnostics.
inline ParsedConfig parse_config(const std::string& text) {
  ParsedConfig out;
  nlohmann::json j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    out.diagnostics.push_back({"PARSE_ERROR", true, "config is not valid JSON"});
    return out;
  }
  if (!j.is_object()) {
    out.diagnostics.push_back({"PARSE_ERROR", true, "config must be a JSON object"});
    return out;
  }
  out.echo = j;
  ExperimentConfig& c = out.config;
  detail::ConfigReader r{j, out.diagnostics, {}};

  std::string kind_str;
  r.get_string("experiment", kind_str);
  if (!kind_str.empty() && !detail::parse_experiment_kind(kind_str, c.kind))
    out.diagnostics.push_back({"INVALID_EXPERIMENT", true,
                               "unknown experiment kind '" + kind_str + "'"});

  r.get_int("n", c.ensemble.n);
  std::string entry_str, base_str;
  r.get_string("entry_kind", entry_str);
  if (!entry_str.empty() && !detail::parse_entry_kind(entry_str, c.ensemble.entry.kind))
    out.diagnostics.push_back({"INVALID_ENTRY_KIND", true,
                               "unknown entry kind '" + entry_str + "'"});
  r.get_real("entry_variance", c.ensemble.entry.variance);
  r.get_real("sigma0", c.ensemble.entry.sigma0);
  r.get_string("base_kind", base_str);
  if (!base_str.empty() && !detail::parse_base_kind(base_str, c.ensemble.entry.base_kind))
    out.diagnostics.push_back({"INVALID_BASE_KIND", true,
                               "unknown base kind '" + base_str + "'"});
  r.get_real("diag_scale", c.ensemble.diag_scale);
  r.get_seed("master_seed", c.ensemble.master_seed);

  r.get_real_array("lambdas", c.lambdas);
  r.get_real("kappa", c.kappa);
  r.get_real("delta_sep", c.delta_sep);
  r.get_real("sep_exponent", c.sep_exponent);
  r.get_real_array("coefficients", c.coefficients);
  r.get_real("offset", c.offset);
  r.get_real_array("delta_grid", c.delta_grid);
  r.get_int_array("n_grid", c.n_grid);
  r.get_real_array("t_grid", c.t_grid);
  r.get_int("k_lo", c.k_lo);
  r.get_int("k_hi", c.k_hi);
  r.get_real_array("moment_p", c.moment_p);
  r.get_int("trials", c.trials);
  r.get_int("samples", c.samples);
  r.get_int("samples_per_n", c.samples_per_n);
  r.get_real("ci_level", c.ci_level);
  r.get_int("workers", c.workers);
  r.get_string("out", c.out_dir);
  r.get_int("grid_size", c.grid_size);
  r.get_real("center_energy", c.center_energy);
  r.get_int("d", c.d);
  r.get_string_array("oracle_checks", c.oracle_checks);
  r.get_int("instances", c.instances);
  r.get_int("oracle_n", c.oracle_n);
  r.get_int("inner_trials", c.inner_trials);
  r.get_int("outer_trials", c.outer_trials);
  r.get_real("theta", c.theta);
  r.get_real_array("s_grid", c.s_grid);
  r.get_int("mc_trials", c.mc_trials);
  r.get_bool("save_spectra", c.save_spectra);

  for (auto it = j.begin(); it != j.end(); ++it)
    if (!r.seen.count(it.key()))
      out.diagnostics.push_back({"UNKNOWN_KEY", false,
                                 "ignoring unknown key '" + it.key() + "'"});
  return out;
}

inline ParsedConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    ParsedConfig out;
    out.diagnostics.push_back({"IO_ERROR", true, "cannot read config file " + path});
    return out;
  }
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

// ----------------------------------------------------------------------------
// Validation: empty (or warning-only) result means the config is runnable.

inline std::vector<Diagnostic> validate(const ExperimentConfig& c) {
  std::vector<Diagnostic> diags;
  auto error = [&](const char* code, std::string msg) {
    diags.push_back({code, true, std::move(msg)});
  };
  auto warning = [&](const char* code, std::string msg) {
    diags.push_back({code, false, std::move(msg)});
  };

  const bool needs_matrix = c.kind == ExperimentKind::sample ||
                            c.kind == ExperimentKind::smallball ||
                            c.kind == ExperimentKind::rigidity;
  const bool needs_entry = needs_matrix || c.kind == ExperimentKind::relations ||
                           c.kind == ExperimentKind::mesoscopic;

  if (needs_matrix && c.ensemble.n < 1)
    error("INVALID_N", "n must be >= 1, got " + std::to_string(c.ensemble.n));
  if (needs_entry) {
    if (!(c.ensemble.entry.variance > 0.0))
      error("INVALID_VARIANCE", "entry_variance must be positive");
    if (c.ensemble.entry.kind == EntryKind::gaussian_divisible &&
        !(c.ensemble.entry.sigma0 > 0.0 && c.ensemble.entry.sigma0 < 1.0))
      error("INVALID_SIGMA0", "sigma0 must lie in (0,1)");
    if (!(c.ensemble.diag_scale >= 0.0))
      error("INVALID_DIAG_SCALE", "diag_scale must be >= 0");
  }
  if (!(c.ci_level > 0.0 && c.ci_level < 1.0))
    error("INVALID_CI_LEVEL", "ci_level must lie in (0,1)");
  if (c.workers < 0) error("INVALID_WORKERS", "workers must be >= 0");
  if (c.out_dir.empty()) error("INVALID_OUT", "output directory must be nonempty");
  if (c.grid_size != 0 && c.grid_size < 16)
    error("INVALID_GRID_SIZE", "grid_size must be 0 (skip) or >= 16");

  // Hypothesis guard: the small-ball theory requires entries with a bounded
  // density; a pure two-point (Rademacher) law sits outside it.
  if ((c.kind == ExperimentKind::smallball || c.kind == ExperimentKind::mesoscopic) &&
      c.ensemble.entry.kind == EntryKind::rademacher)
    warning("OUTSIDE_HYPOTHESIS",
            "rademacher entries have no density; small-ball estimates are outside "
            "the supported hypotheses (experiment will still run)");

  auto check_locations = [&](const std::vector<double>& lambdas, int n) {
    if (!(c.kappa > 0.0 && c.kappa < 2.0)) {
      error("INVALID_KAPPA", "kappa must lie in (0,2)");
      return;
    }
    if (!(c.delta_sep > 0.0) || !(c.sep_exponent > 0.0 && c.sep_exponent <= 1.0)) {
      error("INVALID_SEPARATION_PARAMS",
            "delta_sep must be > 0 and sep_exponent must lie in (0,1]");
      return;
    }
    const double half = bulk_halfwidth(c.kappa, n);
    for (double l : lambdas)
      if (std::fabs(l) > half)
        error("BULK_VIOLATION",
              "location " + format_number(l) + " outside the bulk [-" +
                  format_number(half) + ", " + format_number(half) + "] at n = " +
                  std::to_string(n));
    const double sep = required_separation(c.delta_sep, c.sep_exponent, n);
    // Same sub-ulp slack as make_location_set: gaps constructed at exactly
    // the separation scale must not be flagged over rounding noise.
    const double sep_floor = sep * (1.0 - 4.0 * std::numeric_limits<double>::epsilon());
    for (std::size_t i = 0; i < lambdas.size(); ++i)
      for (std::size_t k = i + 1; k < lambdas.size(); ++k)
        if (std::fabs(lambdas[i] - lambdas[k]) < sep_floor)
          error("SEPARATION_VIOLATION",
                "locations " + format_number(lambdas[i]) + " and " +
                    format_number(lambdas[k]) + " closer than the required separation " +
                    format_number(sep));
  };

  switch (c.kind) {
    case ExperimentKind::sample:
      if (c.trials < 1) error("INVALID_TRIALS", "trials must be >= 1");
      break;
    case ExperimentKind::smallball: {
      if (c.trials < 1) error("INVALID_TRIALS", "trials must be >= 1");
      if (c.lambdas.empty())
        error("MISSING_LOCATIONS", "smallball needs at least one lambda");
      if (c.delta_grid.empty())
        error("INVALID_DELTA_GRID", "smallball needs a nonempty delta_grid");
      for (double d : c.delta_grid)
        if (!(d > 0.0)) error("INVALID_DELTA_GRID", "delta values must be positive");
      if (!c.lambdas.empty() && c.ensemble.n >= 1) check_locations(c.lambdas, c.ensemble.n);
      break;
    }
    case ExperimentKind::rigidity: {
      if (c.samples < 1) error("INVALID_SAMPLES", "samples must be >= 1");
      if (c.lambdas.empty())
        error("MISSING_LOCATIONS", "rigidity needs at least one lambda");
      if (c.k_lo < 1 || c.k_hi < c.k_lo || (c.ensemble.n >= 1 && c.k_hi > c.ensemble.n))
        error("INVALID_K_RANGE", "need 1 <= k_lo <= k_hi <= n");
      if (!c.lambdas.empty() && c.ensemble.n >= 1) check_locations(c.lambdas, c.ensemble.n);
      break;
    }
    case ExperimentKind::relations: {
      if (c.coefficients.empty())
        error("INVALID_COEFFICIENTS", "relations needs a nonempty coefficient list");
      for (double a : c.coefficients)
        if (a == 0.0) error("INVALID_COEFFICIENTS", "coefficients must be nonzero");
      if (c.n_grid.size() < 3)
        error("INVALID_N_GRID", "relations scaling needs at least 3 dimensions in n_grid");
      for (int n : c.n_grid)
        if (n < 1) error("INVALID_N_GRID", "n_grid entries must be >= 1");
      if (c.samples_per_n < 50)
        error("INVALID_SAMPLES", "relations scaling needs samples_per_n >= 50");
      if (c.kappa >= 2.0)
        error("INVALID_KAPPA", "kappa must be < 2 (<= 0 disables the bulk filter)");
      if (!(c.sep_exponent > 0.0 && c.sep_exponent <= 1.0))
        error("INVALID_SEPARATION_PARAMS", "sep_exponent must lie in (0,1]");
      break;
    }
    case ExperimentKind::oracle: {
      static const std::set<std::string> known = {
          "distance_identity", "sigma_min_bound",   "product_inequality",
          "region_volume_d2",  "region_volume_d3",  "region_volume_d4",
          "hanson_wright",     "decoupling",        "operator_norm_tail"};
      for (const auto& name : c.oracle_checks)
        if (!known.count(name))
          error("INVALID_ORACLE_CHECK", "unknown oracle check '" + name + "'");
      if (c.instances < 1) error("INVALID_TRIALS", "instances must be >= 1");
      if (c.oracle_n < 2) error("INVALID_N", "oracle_n must be >= 2");
      if (c.inner_trials < 2 || c.outer_trials < 2)
        error("INVALID_TRIALS", "inner_trials and outer_trials must be >= 2");
      if (c.mc_trials < 100) error("INVALID_TRIALS", "mc_trials must be >= 100");
      for (double s : c.s_grid)
        if (!(s > 1.0)) error("INVALID_S_GRID", "s_grid entries must be > 1");
      break;
    }
    case ExperimentKind::mesoscopic: {
      if (c.trials < 1) error("INVALID_TRIALS", "trials must be >= 1");
      if (c.n_grid.empty())
        error("INVALID_N_GRID", "mesoscopic needs a nonempty n_grid");
      for (int n : c.n_grid)
        if (n < 1) error("INVALID_N_GRID", "n_grid entries must be >= 1");
      if (c.d < 1) error("INVALID_D", "d must be >= 1");
      if (c.delta_grid.empty())
        error("INVALID_DELTA_GRID", "mesoscopic needs a nonempty delta_grid");
      for (double d : c.delta_grid)
        if (!(d > 0.0)) error("INVALID_DELTA_GRID", "delta values must be positive");
      if (!(c.kappa > 0.0 && c.kappa < 2.0))
        error("INVALID_KAPPA", "kappa must lie in (0,2)");
      else if (!(c.delta_sep > 0.0) ||
               !(c.sep_exponent > 0.0 && c.sep_exponent <= 1.0)) {
        error("INVALID_SEPARATION_PARAMS",
              "delta_sep must be > 0 and sep_exponent must lie in (0,1]");
      } else {
        for (int n : c.n_grid) {
          if (n < 1) continue;
          const auto lambdas =
              mesoscopic_lambdas(n, c.d, c.center_energy, c.delta_sep, c.sep_exponent);
          check_locations(lambdas, n);
        }
      }
      break;
    }
  }
  return diags;
}

}  // namespace rmtlab
