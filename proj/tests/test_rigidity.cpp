#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rmtlab/ensemble.hpp"
#include "rmtlab/rigidity.hpp"
#include "rmtlab/semicircle.hpp"
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

// Objective of the grid LP for one feasible nodal vector f.
double chain_objective(const std::vector<double>& c, const std::vector<double>& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) acc += c[i] * f[i];
  return acc;
}

}  // namespace

TEST_CASE("semicircle density and CDF evaluate correctly") {
  REQUIRE(semicircle_density(0.0) == Catch::Approx(1.0 / kPi).epsilon(1e-14));
  REQUIRE(semicircle_density(2.0) == 0.0);
  REQUIRE(semicircle_density(-2.0) == 0.0);
  REQUIRE(semicircle_density(3.0) == 0.0);
  REQUIRE(semicircle_cdf(-2.0) == 0.0);
  REQUIRE(semicircle_cdf(0.0) == Catch::Approx(0.5).margin(1e-14));
  REQUIRE(semicircle_cdf(2.0) == 1.0);
  for (double q : {0.1, 0.37, 0.5, 0.92})
    REQUIRE(semicircle_cdf(semicircle_quantile(q)) == Catch::Approx(q).margin(1e-12));
}

TEST_CASE("W1 to the semicircle vanishes on the quantile construction") {
  const int n = 10'000;
  std::vector<double> atoms(n);
  for (int i = 0; i < n; ++i)
    atoms[static_cast<std::size_t>(i)] =
        semicircle_quantile((static_cast<double>(i) + 0.5) / n);
  REQUIRE(w1_to_semicircle(atoms) <= 1e-3);
}

TEST_CASE("W1 of a point mass at zero equals the semicircle mean absolute value") {
  // integral of |x| rho_sc(x) dx = 8 / (3 pi)
  const double expected = 8.0 / (3.0 * kPi);
  REQUIRE(w1_to_semicircle({0.0}) == Catch::Approx(expected).epsilon(1e-9));
  REQUIRE(expected == Catch::Approx(0.84883).margin(5e-6));
}

TEST_CASE("empirical W1 is a metric within numerical tolerance") {
  const std::vector<double> a{-1.0, 0.0, 0.5, 2.0};
  const std::vector<double> b{-0.5, 0.3, 0.4};
  REQUIRE(w1_empirical(a, a) == 0.0);
  REQUIRE(w1_empirical(a, b) == Catch::Approx(w1_empirical(b, a)).margin(1e-12));
  // triangle through the semicircle on three measures
  REQUIRE(std::fabs(w1_to_semicircle(a) - w1_to_semicircle(b)) <=
          w1_empirical(a, b) + 1e-9);
}

TEST_CASE("chain LP solves hand-checkable instances exactly") {
  REQUIRE(bounded_lipschitz_chain({0.0, 0.0, 0.0}, 0.5) == 0.0);
  REQUIRE(bounded_lipschitz_chain({-0.7}, 0.3) == Catch::Approx(0.7).margin(1e-15));
  // c = (1, 1), h >= 2: both nodes reach +1
  REQUIRE(bounded_lipschitz_chain({1.0, 1.0}, 2.0) == Catch::Approx(2.0).margin(1e-12));
  // c = (1, -1), h <= 2: best is f = (1, 1-h)
  REQUIRE(bounded_lipschitz_chain({1.0, -1.0}, 0.25) ==
          Catch::Approx(0.25).margin(1e-12));
  // c = (1, -2, 1), small h: optimum 2h
  REQUIRE(bounded_lipschitz_chain({1.0, -2.0, 1.0}, 0.1) ==
          Catch::Approx(0.2).margin(1e-12));
  REQUIRE_THROWS_AS(bounded_lipschitz_chain({}, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(bounded_lipschitz_chain({1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("chain LP dominates every sampled feasible point and grows with h") {
  Xoshiro256pp rng(314);
  for (int inst = 0; inst < 5; ++inst) {
    const std::size_t m = 4 + static_cast<std::size_t>(rng() % 4);
    std::vector<double> c(m);
    for (auto& v : c) v = 2.0 * uniform01(rng) - 1.0;
    const double h = 0.05 + uniform01(rng);
    const double opt = bounded_lipschitz_chain(c, h);

    for (int probe = 0; probe < 2000; ++probe) {
      std::vector<double> f(m);
      f[0] = 2.0 * uniform01(rng) - 1.0;
      for (std::size_t i = 1; i < m; ++i) {
        const double step = h * (2.0 * uniform01(rng) - 1.0);
        f[i] = std::clamp(f[i - 1] + step, -1.0, 1.0);
      }
      REQUIRE(opt + 1e-9 >= chain_objective(c, f));
    }
    REQUIRE(opt <= bounded_lipschitz_chain(c, h * 2.0) + 1e-12);
  }
}

TEST_CASE("distance_to_semicircle reports both distances coherently") {
  const EnsembleSpec spec = goe(150, 44);
  const Spectrum s = decompose(sample_matrix(spec, 0));
  const SemicircleDistance d = distance_to_semicircle(s, 64);
  REQUIRE(d.w1 >= 0.0);
  REQUIRE(d.grid_bl >= 0.0);
  const double h = 6.0 / 63.0;
  // grid projection moves each measure by at most one cell
  REQUIRE(d.grid_bl <= d.w1 + 2.0 * h + 1e-12);
  REQUIRE_THROWS_AS(distance_to_semicircle(s, 8), std::invalid_argument);
}

TEST_CASE("envelope_report on a fixed diagonal spectrum is flat") {
  const SpectrumSource source = [](std::uint64_t) {
    return spectrum_of({1.0, 2.0, 3.0});
  };
  const RigidityReport rep = envelope_report(source, 3, 0.0, 1, 3, 5);
  const double expect = 1.0 / std::sqrt(3.0);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(rep.envelope_min[i] == Catch::Approx(expect).epsilon(1e-14));
    REQUIRE(rep.envelope_max[i] == Catch::Approx(expect).epsilon(1e-14));
  }
  REQUIRE_THROWS_AS(envelope_report(source, 3, 0.0, 1, 3, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(envelope_report(source, 3, 0.0, 2, 1, 5), std::invalid_argument);
}

TEST_CASE("envelope aggregation is independent of trial order") {
  const EnsembleSpec spec = goe(60, 5);
  const int samples = 40;
  const SpectrumSource forward = ensemble_source(spec);
  const SpectrumSource reversed = [&](std::uint64_t t) {
    return forward(static_cast<std::uint64_t>(samples - 1) - t);
  };
  const RigidityReport a = envelope_report(forward, 60, 0.5, 6, 20, samples, {1.0, 2.0});
  const RigidityReport b = envelope_report(reversed, 60, 0.5, 6, 20, samples, {1.0, 2.0});
  REQUIRE(a.envelope_min == b.envelope_min);
  REQUIRE(a.envelope_max == b.envelope_max);
  REQUIRE(a.ratio_tail_freq == b.ratio_tail_freq);
  for (std::size_t p = 0; p < a.moment_estimates.size(); ++p)
    REQUIRE(a.moment_estimates[p] ==
            Catch::Approx(b.moment_estimates[p]).epsilon(1e-12));
}

TEST_CASE("moment_check is exactly one on the calibrated spectrum") {
  const int n = 24;
  std::vector<double> evals(n);
  const double root_n = std::sqrt(static_cast<double>(n));
  for (int k = 1; k <= n; ++k) evals[static_cast<std::size_t>(k - 1)] = k / root_n;
  const SpectrumSource source = [&](std::uint64_t) { return spectrum_of(evals); };
  for (double p : {1.0, 2.0, 3.0})
    for (int k : {1, 5, n})
      REQUIRE(moment_check(source, 0.0, k, p, 4) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("GOE inverse-power moments are stable and bounded") {
  const int samples = 500;
  const double a = moment_check(goe(200, 1), 0.0, 20, 2.0, samples);
  const double b = moment_check(goe(200, 2), 0.0, 20, 2.0, samples);
  REQUIRE(std::fabs(a - b) <= 0.2 * std::max(a, b));
  REQUIRE(moment_check(goe(200, 3), 0.0, 50, 1.0, samples) <= 10.0);
}

TEST_CASE("GOE envelope ratio stays bounded across the bulk k range") {
  const RigidityReport rep = envelope_report(goe(400, 7), 0.0, 40, 130, 200);
  double lo = rep.envelope_min[0], hi = rep.envelope_max[0];
  for (std::size_t i = 0; i < rep.envelope_min.size(); ++i) {
    lo = std::min(lo, rep.envelope_min[i]);
    hi = std::max(hi, rep.envelope_max[i]);
  }
  REQUIRE(lo > 0.0);
  REQUIRE(hi / lo <= 6.0);
  REQUIRE(rep.ratio_tail_freq >= 0.0);
  REQUIRE(rep.ratio_tail_freq <= 1.0);
}
