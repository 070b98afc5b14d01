// rmt_lab: command-line front end for the experiment runner.
//
// Subcommands: sample, smallball, rigidity, relations, oracle, mesoscopic,
// report.  Common flags: --config PATH, --seed U64, --workers N, --out DIR.
// Flags override the corresponding config-file fields; the subcommand fixes
// the experiment kind.  Exit codes: 0 success, 1 unexpected error,
// 2 validation error, 3 check failure, 4 solver-failure budget exceeded.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rmtlab/config.hpp"
#include "rmtlab/runner.hpp"
#include "rmtlab/version.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file");
  cmd->add_option("--seed", flags.seed, "master seed (overrides config)");
  cmd->add_option("--workers", flags.workers,
                  "worker threads, 0 = auto (overrides config)");
  cmd->add_option("--out", flags.out, "output directory (overrides config)");
}

void print_diagnostics(const std::vector<rmtlab::Diagnostic>& diags) {
  for (const rmtlab::Diagnostic& d : diags)
    std::cerr << (d.is_error ? "error " : "warning ") << d.code << ": " << d.message
              << "\n";
}

int run_experiment(rmtlab::ExperimentKind kind, const CommonFlags& flags) {
  rmtlab::ExperimentConfig config;
  if (!flags.config_path.empty()) {
    const rmtlab::ParsedConfig parsed = rmtlab::load_config(flags.config_path);
    print_diagnostics(parsed.diagnostics);
    if (rmtlab::has_errors(parsed.diagnostics)) return rmtlab::kExitValidation;
    config = parsed.config;
  }
  config.kind = kind;
  if (flags.seed) config.ensemble.master_seed = *flags.seed;
  if (flags.workers) config.workers = *flags.workers;
  if (flags.out) config.out_dir = *flags.out;

  const rmtlab::RunOutcome outcome = rmtlab::run(config);
  print_diagnostics(outcome.diagnostics);
  if (!outcome.manifest_path.empty()) {
    std::cout << "wrote " << outcome.manifest_path.string() << "\n";
    const auto& summary = outcome.manifest["summary"];
    if (summary.is_object() && summary.contains("headline") &&
        summary["headline"].is_string())
      std::cout << summary["headline"].get<std::string>() << "\n";
  }
  return outcome.exit_code;
}

int run_report(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
  const std::string md = rmtlab::render_report(paths);
  if (out_path.empty()) {
    std::cout << md;
  } else {
    std::ofstream os(out_path);
    if (!os) {
      std::cerr << "error IO_ERROR: cannot open " << out_path << "\n";
      return rmtlab::kExitValidation;
    }
    os << md;
  }
  return rmtlab::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simulation and verification laboratory for least-singular-value "
               "statistics of random symmetric matrices"};
  app.set_version_flag("--version", std::string(rmtlab::kVersion));
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    rmtlab::ExperimentKind kind;
  };
  const Sub subs[] = {
      {"sample", "draw matrices and store spectra", rmtlab::ExperimentKind::sample},
      {"smallball", "small-ball probabilities of sigma_min at fixed locations",
       rmtlab::ExperimentKind::smallball},
      {"rigidity", "eigenvalue envelope and semicircle-distance statistics",
       rmtlab::ExperimentKind::rigidity},
      {"relations", "minimal linear relations among eigenvalues across n",
       rmtlab::ExperimentKind::relations},
      {"oracle", "numerical verification suite for the core identities",
       rmtlab::ExperimentKind::oracle},
      {"mesoscopic", "small-ball sweep with n-dependent location separation",
       rmtlab::ExperimentKind::mesoscopic},
  };

  CommonFlags flags[std::size(subs)];
  CLI::App* cmds[std::size(subs)];
  for (std::size_t i = 0; i < std::size(subs); ++i) {
    cmds[i] = app.add_subcommand(subs[i].name, subs[i].help);
    add_common_flags(cmds[i], flags[i]);
  }

  std::vector<std::string> report_inputs;
  std::string report_out;
  CLI::App* report = app.add_subcommand(
      "report", "render a markdown summary table from run manifests");
  report->add_option("manifests", report_inputs, "manifest files or run directories")
      ->required();
  report->add_option("--out", report_out, "write the table to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) return run_report(report_inputs, report_out);
    for (std::size_t i = 0; i < std::size(subs); ++i)
      if (cmds[i]->parsed()) return run_experiment(subs[i].kind, flags[i]);
  } catch (const std::exception& e) {
    std::cerr << "error UNEXPECTED: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
