#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rmtlab/ensemble.hpp"
#include "rmtlab/smallball.hpp"
#include "rmtlab/spectral.hpp"

using namespace rmtlab;

namespace {

Spectrum spectrum_of(std::vector<double> evals, int n_override = -1) {
  Spectrum s;
  s.n = n_override >= 0 ? n_override : static_cast<int>(evals.size());
  s.eigenvalues = Eigen::Map<Eigen::VectorXd>(evals.data(),
                                              static_cast<Eigen::Index>(evals.size()));
  return s;
}

}  // namespace

TEST_CASE("wilson_interval matches reference values and boundary conventions") {
  {
    auto [lo, hi] = wilson_interval(0, 100, 0.95);
    REQUIRE(lo == 0.0);
    REQUIRE(hi == Catch::Approx(0.0370).margin(5e-4));
  }
  {
    auto [lo, hi] = wilson_interval(50, 100, 0.95);
    REQUIRE(lo == Catch::Approx(0.404).margin(1e-3));
    REQUIRE(hi == Catch::Approx(0.596).margin(1e-3));
  }
  {
    auto [lo, hi] = wilson_interval(100, 100, 0.95);
    REQUIRE(hi == 1.0);
    REQUIRE(lo > 0.9);
  }
  REQUIRE_THROWS_AS(wilson_interval(0, 0, 0.95), std::invalid_argument);
  REQUIRE_THROWS_AS(wilson_interval(5, 4, 0.95), std::invalid_argument);
  REQUIRE_THROWS_AS(wilson_interval(1, 4, 1.0), std::invalid_argument);
}

TEST_CASE("sigma_min sampling pass yields finite positive values") {
  const EnsembleSpec spec = goe(30, 9);
  const std::vector<double> lambdas{-2.0, 3.0};
  const auto s = run_sigma_min_samples(spec, lambdas, 100);
  REQUIRE(s.n == 30);
  REQUIRE(s.requested_trials == 100);
  REQUIRE(s.failed_trials == 0);
  REQUIRE(s.values.size() == 200);
  for (std::uint64_t t = 0; t < 100; ++t)
    for (std::size_t i = 0; i < 2; ++i) {
      REQUIRE(std::isfinite(s.sigma_min(t, i)));
      REQUIRE(s.sigma_min(t, i) > 0.0);
    }
  REQUIRE_THROWS_AS(run_sigma_min_samples(spec, lambdas, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(run_sigma_min_samples(spec, {}, 10), std::invalid_argument);
}

TEST_CASE("threshold extremes hit zero and full success counts") {
  const EnsembleSpec spec = goe(30, 12);
  const auto s = run_sigma_min_samples(spec, {0.0}, 100);
  const TailEstimate none = estimate_marginal(s, 0, 0.0);
  REQUIRE(none.successes == 0);
  REQUIRE(none.p_hat == 0.0);
  REQUIRE(none.ci_lo == 0.0);
  const TailEstimate all = estimate_marginal(s, 0, 1e9);
  REQUIRE(all.successes == all.trials);
  REQUIRE(all.ci_hi == 1.0);
  REQUIRE_THROWS_AS(estimate_marginal(s, 1, 0.5), std::invalid_argument);
  REQUIRE_THROWS_AS(estimate_marginal(s, 0, -0.5), std::invalid_argument);
}

TEST_CASE("joint estimates respect inclusion and threshold monotonicity") {
  const EnsembleSpec spec = goe(30, 4);
  const auto s = run_sigma_min_samples(spec, {-2.0, 3.0}, 2000);
  const TailEstimate joint = estimate_joint(s, {1.0, 1.0});
  const TailEstimate m0 = estimate_marginal(s, 0, 1.0);
  const TailEstimate m1 = estimate_marginal(s, 1, 1.0);
  REQUIRE(joint.successes <= std::min(m0.successes, m1.successes));
  const TailEstimate tighter = estimate_joint(s, {0.5, 0.5});
  REQUIRE(tighter.successes <= joint.successes);
  REQUIRE_THROWS_AS(estimate_joint(s, {1.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(estimate_joint(s, {1.0, -1.0}), std::invalid_argument);
}

TEST_CASE("factorization ratio degenerates to one when a threshold never binds") {
  const EnsembleSpec spec = goe(30, 8);
  const auto s = run_sigma_min_samples(spec, {0.0, 1.5}, 2000);
  const FactorizationResult r = factorization_ratio(s, {1.0, 1e12});
  REQUIRE_FALSE(r.undefined);
  REQUIRE(r.marginals[1].p_hat == 1.0);
  REQUIRE(r.ratio == 1.0);
  REQUIRE(r.ci_lo == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(r.ci_hi == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("factorization ratio is near one for independent locations") {
  // Two eigenvalues far apart, each either well inside or well outside the
  // threshold by an independent fair coin, so the joint truly factorizes.
  const SpectrumSource source = [](std::uint64_t t) {
    Xoshiro256pp rng(derive_seed(77, t));
    const double a = (rng() & 1) ? 0.001 : 1.0;
    const double b = (rng() & 1) ? 0.001 : 1.0;
    return spectrum_of({-10.0 + a, 10.0 + b}, 2);
  };
  const double delta = 0.01 * std::sqrt(2.0);
  const auto s = run_sigma_min_samples(source, 2, {-10.0, 10.0}, 4000);
  const FactorizationResult r = factorization_ratio(s, {delta, delta});
  REQUIRE_FALSE(r.undefined);
  REQUIRE(r.ratio > 0.8);
  REQUIRE(r.ratio < 1.25);
  REQUIRE(r.ci_lo <= 1.0);
  REQUIRE(r.ci_hi >= 1.0);
}

TEST_CASE("fit_scaling recovers exact power laws from dyadic data") {
  const std::vector<double> deltas{0.25, 0.5, 1.0};
  const std::uint64_t N = 1ull << 20;
  for (double s : {1.0, 2.0}) {
    std::vector<TailEstimate> est;
    for (double d : deltas) {
      const double p = std::pow(2.0, -4.0) * std::pow(d, s);
      est.push_back(make_tail_estimate(static_cast<std::uint64_t>(p * N + 0.5), N, 0.95));
    }
    const ScalingFit fit = fit_scaling(deltas, est);
    REQUIRE(fit.slope == Catch::Approx(s).margin(1e-10));
    REQUIRE(fit.r_squared == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(fit.points_used == 3);
  }
}

TEST_CASE("fit_scaling rejects degenerate inputs") {
  const std::vector<double> deltas{0.25, 0.5, 1.0};
  std::vector<TailEstimate> zeros{make_tail_estimate(0, 100, 0.95),
                                  make_tail_estimate(0, 100, 0.95),
                                  make_tail_estimate(50, 100, 0.95)};
  REQUIRE_THROWS_AS(fit_scaling(deltas, zeros), std::runtime_error);
  // A single point cannot pin a slope either.
  REQUIRE_THROWS_AS(fit_scaling({0.5}, {make_tail_estimate(1, 2, 0.95)}),
                    std::runtime_error);
}

TEST_CASE("pinned regression: GOE tail count at the reference configuration") {
  // Frozen baseline: any change to the sampling chain, the eigensolver
  // route, or the threshold convention shows up as a changed count.
  const EnsembleSpec spec = goe(200, 20260822);
  const auto s = run_sigma_min_samples(spec, {0.0}, 20000);
  const TailEstimate est = estimate_marginal(s, 0, 0.5);
  constexpr std::uint64_t kFrozenSuccesses = 6064;  // pinned from the first pilot run
  CHECK(est.trials == 20000);
  REQUIRE(est.successes == kFrozenSuccesses);
}

TEST_CASE("mesoscopic_lambdas places locations symmetrically at the right scale") {
  {
    const auto l = mesoscopic_lambdas(100, 2, 0.7, 0.5, 1.0);
    REQUIRE(l.size() == 2);
    REQUIRE(l[0] == Catch::Approx(4.5).margin(1e-12));
    REQUIRE(l[1] == Catch::Approx(9.5).margin(1e-12));
  }
  {
    const auto l = mesoscopic_lambdas(100, 2, 0.7, 0.5, 0.5);
    REQUIRE(l[0] == Catch::Approx(6.75).margin(1e-12));
    REQUIRE(l[1] == Catch::Approx(7.25).margin(1e-12));
  }
  {
    const auto l = mesoscopic_lambdas(100, 3, 0.0, 1.0, 1.0);
    REQUIRE(l[1] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(l[2] - l[1] == Catch::Approx(10.0).margin(1e-12));
  }
}

TEST_CASE("mesoscopic experiment produces finite rows on a small grid") {
  MesoscopicConfig cfg;
  cfg.master_seed = 31;
  cfg.n_grid = {40, 60};
  cfg.d = 2;
  cfg.center_energy = 0.0;
  cfg.delta_sep = 1.0;
  cfg.sep_exponent = 0.5;
  cfg.deltas = {1.0, 1.0};
  cfg.trials = 300;
  const auto rows = mesoscopic_experiment(cfg);
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) {
    REQUIRE(row.lambdas.size() == 2);
    REQUIRE(row.factorization.joint.trials == 300);
    REQUIRE(std::isfinite(row.factorization.joint.p_hat));
  }
  REQUIRE(rows[0].separation == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(rows[1].separation == Catch::Approx(1.0).margin(1e-12));

  MesoscopicConfig bad = cfg;
  bad.n_grid.clear();
  REQUIRE_THROWS_AS(mesoscopic_experiment(bad), std::invalid_argument);
  bad = cfg;
  bad.deltas = {1.0};
  REQUIRE_THROWS_AS(mesoscopic_experiment(bad), std::invalid_argument);
}

TEST_CASE("mesoscopic run with unit exponent reproduces the direct estimator") {
  MesoscopicConfig cfg;
  cfg.master_seed = 55;
  cfg.n_grid = {50};
  cfg.d = 2;
  cfg.center_energy = 0.0;
  cfg.kappa = 0.5;
  cfg.delta_sep = 0.8;
  cfg.sep_exponent = 1.0;
  cfg.deltas = {1.0, 2.0};
  cfg.trials = 400;
  const auto rows = mesoscopic_experiment(cfg);
  REQUIRE(rows.size() == 1);

  EnsembleSpec spec = goe(50, 55);
  const auto lambdas = mesoscopic_lambdas(50, 2, 0.0, 0.8, 1.0);
  const auto s = run_sigma_min_samples(spec, lambdas, 400);
  const FactorizationResult direct = factorization_ratio(s, cfg.deltas);
  REQUIRE(rows[0].lambdas == lambdas);
  REQUIRE(rows[0].factorization.joint.successes == direct.joint.successes);
  REQUIRE(rows[0].factorization.ratio == direct.ratio);
  REQUIRE(rows[0].factorization.ci_lo == direct.ci_lo);
}
