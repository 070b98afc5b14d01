#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rmtlab/ensemble.hpp"
#include "rmtlab/relations.hpp"
#include "rmtlab/spectral.hpp"
#include "rmtlab/stats.hpp"

using namespace rmtlab;

namespace {

Spectrum spectrum_of(std::vector<double> evals, int n_override = -1) {
  Spectrum s;
  s.n = n_override >= 0 ? n_override : static_cast<int>(evals.size());
  s.eigenvalues = Eigen::Map<Eigen::VectorXd>(evals.data(),
                                              static_cast<Eigen::Index>(evals.size()));
  return s;
}

RelationSpec unfiltered(std::vector<double> a, double c) {
  RelationSpec spec;
  spec.coefficients = std::move(a);
  spec.offset = c;
  spec.kappa = 0.0;      // bulk filter off
  spec.delta_sep = 0.0;  // separation filter off
  return spec;
}

double residual_of(const RelationSpec& spec, const std::vector<double>& tuple) {
  return detail::relation_residual(spec.coefficients, spec.offset, tuple.data(),
                                   tuple.size());
}

}  // namespace

TEST_CASE("minimum relation on a tiny fixed spectrum") {
  const Spectrum s = spectrum_of({-3.0, 1.0, 2.0});
  const RelationSpec spec = unfiltered({1.0, 1.0}, 0.0);
  const RelationScanResult r = min_linear_relation(s, spec);
  REQUIRE(r.min_value == 1.0);  // -3 + 2
  REQUIRE(r.tuple_count == 6);  // 3 unordered pairs, ordered both ways
  std::vector<double> sorted = r.argmin_tuple;
  std::sort(sorted.begin(), sorted.end());
  REQUIRE(sorted == std::vector<double>{-3.0, 2.0});
}

TEST_CASE("single-coefficient relation finds an exact hit") {
  const Spectrum s = spectrum_of({-3.0, 1.0, 2.0});
  const RelationScanResult r = min_linear_relation(s, unfiltered({1.0}, 2.0));
  REQUIRE(r.min_value == 0.0);
  REQUIRE(r.argmin_tuple == std::vector<double>{2.0});
  REQUIRE(r.tuple_count == 3);
}

TEST_CASE("distinct additive gap matches the direct expression") {
  const Spectrum s = spectrum_of({-2.0, 2.0005, 5.0});
  const RelationScanResult r = distinct_singular_gap(s, 0.0, 0.0);
  REQUIRE(r.min_value == std::fabs(-2.0 + 2.0005));
  const Spectrum sym = spectrum_of({-1.75, 1.75});
  REQUIRE(distinct_singular_gap(sym, 0.0, 0.0).min_value == 0.0);
}

TEST_CASE("relation spec validation rejects degenerate inputs") {
  const Spectrum s = spectrum_of({-1.0, 1.0});
  REQUIRE_THROWS_AS(min_linear_relation(s, unfiltered({}, 0.0)), std::invalid_argument);
  REQUIRE_THROWS_AS(min_linear_relation(s, unfiltered({1.0, 0.0}, 0.0)),
                    std::invalid_argument);
  RelationSpec bad = unfiltered({1.0}, 0.0);
  bad.sep_exponent = 0.0;
  REQUIRE_THROWS_AS(min_linear_relation(s, bad), std::invalid_argument);
}

TEST_CASE("empty admissible domains throw with a zero tuple count") {
  {
    // Every eigenvalue outside the bulk window.
    const Spectrum s = spectrum_of({100.0, 101.0}, 4);
    RelationSpec spec = unfiltered({1.0, 1.0}, 0.0);
    spec.kappa = 0.5;
    REQUIRE_THROWS_AS(min_linear_relation(s, spec), EmptyDomain);
  }
  {
    // Separation larger than the spectral diameter.
    const Spectrum s = spectrum_of({0.0, 1.0, 2.0});
    RelationSpec spec = unfiltered({1.0, 1.0}, 0.0);
    spec.delta_sep = 100.0;
    spec.sep_exponent = 0.5;  // separation scale = delta_sep exactly
    try {
      min_linear_relation(s, spec);
      FAIL("expected an empty domain");
    } catch (const EmptyDomain& e) {
      REQUIRE(e.tuple_count == 0);
    }
  }
}

TEST_CASE("tuple counting matches hand enumeration under separation") {
  const Spectrum s = spectrum_of({0.0, 5.0, 10.0});
  auto with_sep = [&](std::vector<double> a, double sep) {
    RelationSpec spec = unfiltered(std::move(a), 0.0);
    spec.delta_sep = sep;
    spec.sep_exponent = 0.5;  // separation scale independent of n
    return spec;
  };
  REQUIRE(min_linear_relation(s, with_sep({1.0, 1.0}, 4.0)).tuple_count == 6);
  REQUIRE(min_linear_relation(s, with_sep({1.0, 1.0}, 6.0)).tuple_count == 2);
  REQUIRE(min_linear_relation(s, with_sep({1.0, 1.0, 1.0}, 4.0)).tuple_count == 6);
  REQUIRE_THROWS_AS(min_linear_relation(s, with_sep({1.0, 1.0, 1.0}, 6.0)), EmptyDomain);
}

TEST_CASE("fast scan equals exhaustive enumeration on random instances") {
  Xoshiro256pp rng(2024);
  int nonempty = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const int n = 10 + static_cast<int>(rng() % 31);
    const std::size_t d = 2 + (rng() & 1);
    RelationSpec spec;
    for (std::size_t k = 0; k < d; ++k) {
      const double mag = 0.5 + 1.5 * uniform01(rng);
      spec.coefficients.push_back((rng() & 1) ? mag : -mag);
    }
    spec.offset = 6.0 * (uniform01(rng) - 0.5);
    spec.kappa = (rng() & 1) ? 0.0 : 0.3 + 0.7 * uniform01(rng);
    spec.delta_sep = (rng() & 1) ? 0.0 : 0.1 + 0.9 * uniform01(rng);
    spec.sep_exponent = (rng() & 1) ? 1.0 : 0.75;

    const Spectrum sp = decompose(sample_matrix(goe(n, 5000 + static_cast<std::uint64_t>(inst)), 0));

    bool fast_empty = false, brute_empty = false;
    RelationScanResult fast, brute;
    try {
      fast = min_linear_relation(sp, spec);
    } catch (const EmptyDomain&) {
      fast_empty = true;
    }
    try {
      brute = scan_relation_exhaustive(sp, spec);
    } catch (const EmptyDomain&) {
      brute_empty = true;
    }
    REQUIRE(fast_empty == brute_empty);
    if (fast_empty) continue;
    ++nonempty;
    REQUIRE(fast.min_value == brute.min_value);
    REQUIRE(fast.tuple_count == brute.tuple_count);
    REQUIRE(residual_of(spec, fast.argmin_tuple) == fast.min_value);
    REQUIRE(residual_of(spec, brute.argmin_tuple) == brute.min_value);
  }
  REQUIRE(nonempty >= 150);
}

TEST_CASE("scaling the relation by a power of two scales the minimum exactly") {
  const Spectrum sp = decompose(sample_matrix(goe(30, 3), 0));
  RelationSpec base;
  base.coefficients = {1.3, -0.7};
  base.offset = 0.4;
  base.kappa = 0.5;
  base.delta_sep = 0.5;
  const RelationScanResult r0 = min_linear_relation(sp, base);

  RelationSpec up = base;
  for (auto& a : up.coefficients) a *= 4.0;
  up.offset *= 4.0;
  const RelationScanResult r4 = min_linear_relation(sp, up);
  REQUIRE(r4.min_value == 4.0 * r0.min_value);
  REQUIRE(r4.argmin_tuple == r0.argmin_tuple);

  RelationSpec neg = base;
  for (auto& a : neg.coefficients) a *= -8.0;
  neg.offset *= -8.0;
  const RelationScanResult r8 = min_linear_relation(sp, neg);
  REQUIRE(r8.min_value == 8.0 * r0.min_value);
  REQUIRE(residual_of(neg, r8.argmin_tuple) == r8.min_value);
}

TEST_CASE("negating the spectrum preserves the symmetric relation minimum") {
  const Spectrum sp = decompose(sample_matrix(goe(40, 17), 0));
  std::vector<double> negated(static_cast<std::size_t>(sp.eigenvalues.size()));
  for (Eigen::Index i = 0; i < sp.eigenvalues.size(); ++i)
    negated[static_cast<std::size_t>(sp.eigenvalues.size() - 1 - i)] = -sp.eigenvalues(i);
  const Spectrum neg = spectrum_of(std::move(negated), sp.n);

  const RelationSpec spec = [] {
    RelationSpec s = unfiltered({1.0, 1.0}, 0.0);
    s.kappa = 0.5;
    s.delta_sep = 0.5;
    return s;
  }();
  const RelationScanResult a = min_linear_relation(sp, spec);
  const RelationScanResult b = min_linear_relation(neg, spec);
  REQUIRE(a.min_value == b.min_value);
  REQUIRE(a.tuple_count == b.tuple_count);
}

TEST_CASE("tightening the filters never lowers the minimum") {
  const Spectrum sp = decompose(sample_matrix(goe(60, 29), 0));
  auto variant = [](double kappa, double delta_sep) {
    RelationSpec s;
    s.coefficients = {1.0, 1.0};
    s.offset = 0.0;
    s.kappa = kappa;
    s.delta_sep = delta_sep;
    return s;
  };
  const double m_open = min_linear_relation(sp, variant(0.0, 0.0)).min_value;
  const double m_bulk = min_linear_relation(sp, variant(0.5, 0.0)).min_value;
  const double m_sep = min_linear_relation(sp, variant(0.5, 0.5)).min_value;
  const double m_wide = min_linear_relation(sp, variant(0.5, 1.0)).min_value;
  REQUIRE(m_open <= m_bulk);
  REQUIRE(m_bulk <= m_sep);
  REQUIRE(m_sep <= m_wide);
}

TEST_CASE("GOE relation minima are positive with admissible argmins") {
  RelationSpec spec;
  spec.coefficients = {1.0, 1.0};
  spec.offset = 0.0;
  spec.kappa = 0.5;
  spec.delta_sep = 0.5;
  const int n = 200;
  const double half = bulk_halfwidth(spec.kappa, n);
  const double sep = required_separation(spec.delta_sep, spec.sep_exponent, n);
  for (std::uint64_t t = 0; t < 20; ++t) {
    const Spectrum sp = decompose(sample_matrix(goe(n, 99), t));
    const RelationScanResult r = min_linear_relation(sp, spec);
    REQUIRE(r.min_value > 0.0);
    REQUIRE(r.argmin_tuple.size() == 2);
    for (double x : r.argmin_tuple) REQUIRE(std::fabs(x) <= half);
    REQUIRE(std::fabs(r.argmin_tuple[0] - r.argmin_tuple[1]) >= sep * (1.0 - 1e-12));
    REQUIRE(residual_of(spec, r.argmin_tuple) == r.min_value);
  }
}

TEST_CASE("pair-sum minima over iid uniform spectra scale like n^{-3/2}") {
  const SpectrumFamily family = [](int n, std::uint64_t t) {
    Xoshiro256pp rng(derive_seed(123, t, static_cast<std::uint64_t>(n)));
    const double half = 2.0 * std::sqrt(static_cast<double>(n));
    std::vector<double> xs(static_cast<std::size_t>(n));
    for (auto& x : xs) x = half * (2.0 * uniform01(rng) - 1.0);
    std::sort(xs.begin(), xs.end());
    return spectrum_of(std::move(xs), n);
  };
  const RelationSpec spec = unfiltered({1.0, 1.0}, 0.0);
  const RelationScalingResult res =
      scaling_vs_n_detailed(spec, family, {100, 200, 400, 800}, 500);
  REQUIRE(res.fit_ok);
  REQUIRE(res.fit.slope == Catch::Approx(-1.5).margin(0.2));
  REQUIRE(res.fit.r_squared > 0.9);
  for (const auto& row : res.rows) REQUIRE(row.samples_excluded == 0);
}

TEST_CASE("nearest-atom minima over iid uniform spectra scale like n^{-1/2}") {
  std::vector<double> log_n, log_med;
  for (int n : {100, 200, 400, 800}) {
    const double target = 0.3 * std::sqrt(static_cast<double>(n));
    RelationSpec spec = unfiltered({1.0}, target);
    std::vector<double> mins;
    for (std::uint64_t t = 0; t < 500; ++t) {
      Xoshiro256pp rng(derive_seed(321, t, static_cast<std::uint64_t>(n)));
      const double half = 2.0 * std::sqrt(static_cast<double>(n));
      std::vector<double> xs(static_cast<std::size_t>(n));
      for (auto& x : xs) x = half * (2.0 * uniform01(rng) - 1.0);
      std::sort(xs.begin(), xs.end());
      mins.push_back(min_linear_relation(spectrum_of(std::move(xs), n), spec).min_value);
    }
    log_n.push_back(std::log(static_cast<double>(n)));
    log_med.push_back(std::log(median(mins)));
  }
  const OlsFit fit = ols_fit(log_n, log_med);
  REQUIRE(fit.slope == Catch::Approx(-0.5).margin(0.2));
}
