#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "rmtlab/parallel.hpp"
#include "rmtlab/rng.hpp"
#include "rmtlab/stats.hpp"

using namespace rmtlab;

TEST_CASE("derive_seed is deterministic and separates its inputs") {
  REQUIRE(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  std::set<std::uint64_t> seen;
  for (std::uint64_t m = 0; m < 4; ++m)
    for (std::uint64_t t = 0; t < 16; ++t)
      for (std::uint64_t s = 0; s < 3; ++s) seen.insert(derive_seed(m, t, s));
  REQUIRE(seen.size() == 4u * 16u * 3u);
}

TEST_CASE("engine streams are reproducible and seed-sensitive") {
  Xoshiro256pp a(42), b(42), c(43);
  bool all_equal = true, any_differ = false;
  for (int i = 0; i < 1000; ++i) {
    const auto va = a();
    all_equal = all_equal && (va == b());
    any_differ = any_differ || (va != c());
  }
  REQUIRE(all_equal);
  REQUIRE(any_differ);
}

TEST_CASE("uniform01 stays inside the open unit interval with mean one half") {
  Xoshiro256pp rng(7);
  const int n = 1'000'000;
  double sum = 0.0;
  bool in_range = true;
  for (int i = 0; i < n; ++i) {
    const double u = uniform01(rng);
    in_range = in_range && u > 0.0 && u < 1.0;
    sum += u;
  }
  REQUIRE(in_range);
  const double se = std::sqrt(1.0 / 12.0 / n);
  REQUIRE(std::fabs(sum / n - 0.5) < 3.0 * se);
}

TEST_CASE("inverse normal CDF reproduces standard quantiles") {
  REQUIRE(std::fabs(normal_icdf(0.5)) < 1e-9);
  REQUIRE(normal_icdf(0.975) == Catch::Approx(1.959963985).epsilon(1e-6));
  REQUIRE(normal_icdf(0.16) == Catch::Approx(-0.994457883).epsilon(1e-6));
  REQUIRE(normal_icdf(0.0013) == Catch::Approx(-3.011454).epsilon(1e-5));
  REQUIRE(normal_icdf(0.3) == Catch::Approx(-normal_icdf(0.7)).epsilon(1e-9));
  REQUIRE(std::isnan(normal_icdf(0.0)));
  REQUIRE(std::isnan(normal_icdf(1.0)));
  REQUIRE(normal_two_sided_quantile(0.95) == Catch::Approx(1.959963985).epsilon(1e-6));
}

TEST_CASE("draw_normal matches standard normal moments at one million draws") {
  Xoshiro256pp rng(2024);
  const int n = 1'000'000;
  std::vector<double> x(n);
  for (auto& v : x) v = draw_normal(rng);
  const SampleMoments m = sample_moments(x);
  REQUIRE(std::fabs(m.mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  REQUIRE(std::fabs(m.variance - 1.0) < 3.0 * std::sqrt(2.0 / n));
  REQUIRE(std::fabs(m.kurtosis - 3.0) < 3.0 * std::sqrt(24.0 / n));
}

TEST_CASE("parallel_for_index gives worker-count-independent results") {
  const std::uint64_t count = 10'000;
  auto fill = [&](int workers) {
    std::vector<double> out(count);
    parallel_for_index(count, workers, [&](std::uint64_t i) {
      Xoshiro256pp rng(derive_seed(9, i));
      out[i] = draw_normal(rng);
    });
    return out;
  };
  const auto serial = fill(1);
  REQUIRE(fill(4) == serial);
  REQUIRE(fill(3) == serial);
}

TEST_CASE("parallel_for_index rethrows a body exception") {
  REQUIRE_THROWS_AS(parallel_for_index(100, 4,
                                       [](std::uint64_t i) {
                                         if (i == 37) throw std::runtime_error("boom");
                                       }),
                    std::runtime_error);
}

TEST_CASE("worker resolution prefers the explicit request") {
  REQUIRE(resolve_workers(5) == 5);
  REQUIRE(resolve_workers(0) >= 1);
}
