#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rmtlab/ensemble.hpp"
#include "rmtlab/oracles.hpp"

using namespace rmtlab;

TEST_CASE("column distance routes agree on a diagonal matrix") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  a(0, 0) = 2.0;
  a(1, 1) = 3.0;
  REQUIRE(column_span_distance(a, 0) == Catch::Approx(2.0).margin(1e-12));
  REQUIRE(column_distance_formula(a) == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("column distance routes agree on random symmetric matrices") {
  int evaluated = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const Eigen::MatrixXd g = detail::iid_gaussian_matrix(5, derive_seed(404, t, 0));
    const Eigen::MatrixXd a = 0.5 * (g + g.transpose());
    if (detail::condition_number(a.bottomRightCorner(4, 4)) > kConditionCutoff) continue;
    ++evaluated;
    const double via_projection = column_span_distance(a, 0);
    const double via_formula = column_distance_formula(a);
    REQUIRE(detail::relative_error(via_projection, via_formula) <= 1e-10);
  }
  REQUIRE(evaluated >= 90);
}

TEST_CASE("distance identity check passes at the library tolerance") {
  const IdentityCheckResult r = distance_identity_check(10, 200, 6021);
  REQUIRE(r.instances + r.skipped == 200);
  REQUIRE(r.skipped <= 2);
  REQUIRE(r.max_rel_error <= kIdentityTol);
  REQUIRE_THROWS_AS(distance_identity_check(1, 10, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(distance_identity_check(5, 0, 0), std::invalid_argument);
}

TEST_CASE("eigenvector-column lower bound on sigma_min never breaks") {
  const IdentityCheckResult r = sigma_min_distance_bound_check(10, 200, 7103);
  REQUIRE(r.instances == 200);
  REQUIRE(r.max_abs_error <= kIdentityTol);
}

TEST_CASE("product of least singular values bounds the product matrix") {
  const IdentityCheckResult two = product_inequality_check(2, 8, 500, 8311);
  REQUIRE(two.instances == 500);
  REQUIRE(two.max_abs_error <= kIdentityTol);
  const IdentityCheckResult three = product_inequality_check(3, 6, 200, 8312);
  REQUIRE(three.max_abs_error <= kIdentityTol);
  REQUIRE_THROWS_AS(product_inequality_check(1, 8, 10, 0), std::invalid_argument);
}

TEST_CASE("iid gaussian helper is deterministic in the seed") {
  const Eigen::MatrixXd a = detail::iid_gaussian_matrix(6, 99);
  const Eigen::MatrixXd b = detail::iid_gaussian_matrix(6, 99);
  const Eigen::MatrixXd c = detail::iid_gaussian_matrix(6, 100);
  REQUIRE((a - b).norm() == 0.0);
  REQUIRE((a - c).norm() > 0.0);
}

TEST_CASE("norm concentration check handles degenerate and typical matrices") {
  EntryDistribution gauss;  // standard normal coordinates
  {
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(4, 4);
    const HansonWrightResult r = hanson_wright_check(zero, gauss, 100, {0.5}, 1);
    REQUIRE(r.hs_norm == 0.0);
    REQUIRE(r.op_norm == 0.0);
    REQUIRE(r.tail_at_4op == 0.0);
    REQUIRE(r.passed);
  }
  {
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(20, 20);
    const HansonWrightResult r = hanson_wright_check(eye, gauss, 20000, {0.5, 1.0, 2.0}, 2);
    REQUIRE(r.hs_norm == Catch::Approx(std::sqrt(20.0)).margin(1e-12));
    REQUIRE(r.op_norm == Catch::Approx(1.0).margin(1e-10));
    REQUIRE(r.passed);
    REQUIRE(r.rows.size() == 3);
    // Larger thresholds can only shrink the exceedance frequency.
    REQUIRE(r.rows[0].frequency >= r.rows[1].frequency);
    REQUIRE(r.rows[1].frequency >= r.rows[2].frequency);
  }
  {
    const Eigen::MatrixXd m = detail::iid_gaussian_matrix(50, derive_seed(3, 0, 17));
    const HansonWrightResult r = hanson_wright_check(m, gauss, 100000, {1.0}, 4);
    REQUIRE(r.hs_norm == Catch::Approx(50.0).epsilon(0.1));
    REQUIRE(r.op_norm > r.hs_norm / std::sqrt(50.0));
    REQUIRE(r.passed);
  }
  REQUIRE_THROWS_AS(hanson_wright_check(Eigen::MatrixXd::Identity(2, 2), gauss, 0, {}, 1),
                    std::invalid_argument);
}

TEST_CASE("decoupling comparison is exact at zero frequency") {
  EntryDistribution dist;
  dist.kind = EntryKind::gaussian_divisible;
  dist.sigma0 = 0.5;
  const int n = 3;
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  const DecouplingResult r = decoupling_check(n, 0.0, m, u, 50, 50, dist, 12);
  REQUIRE(r.lhs == 1.0);
  REQUIRE(r.rhs == 1.0);
  REQUIRE(r.margin == 0.0);
  REQUIRE(r.bias_bound == 0.0);
  REQUIRE(r.passed);
}

TEST_CASE("decoupling inequality holds on a random symmetric matrix") {
  EntryDistribution dist;
  dist.kind = EntryKind::gaussian_divisible;
  dist.sigma0 = 0.5;
  const int n = 4;
  const Eigen::MatrixXd g = detail::iid_gaussian_matrix(n, derive_seed(21, 1, 17));
  const Eigen::MatrixXd m = (g + g.transpose()) / (2.0 * n);
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  const DecouplingResult r = decoupling_check(n, 0.3, m, u, 2000, 300, dist, 3455);
  REQUIRE(r.passed);
  REQUIRE(r.lhs >= 0.0);
  REQUIRE(r.rhs >= 0.0);
  REQUIRE(r.rhs_alternative <= r.rhs + 1e-12);

  // Identical inputs reproduce bitwise; worker count has no numeric effect.
  const DecouplingResult again = decoupling_check(n, 0.3, m, u, 2000, 300, dist, 3455, 3);
  REQUIRE(again.lhs == r.lhs);
  REQUIRE(again.rhs == r.rhs);
  REQUIRE(again.margin == r.margin);
}

TEST_CASE("decoupling validates its domain") {
  EntryDistribution dist;
  dist.kind = EntryKind::gaussian_divisible;
  const Eigen::MatrixXd m9 = Eigen::MatrixXd::Identity(9, 9);
  const Eigen::VectorXd u9 = Eigen::VectorXd::Zero(9);
  REQUIRE_THROWS_AS(decoupling_check(9, 0.1, m9, u9, 10, 10, dist, 0),
                    std::invalid_argument);
  EntryDistribution plain;  // gaussian, not divisible
  const Eigen::MatrixXd m2 = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::VectorXd u2 = Eigen::VectorXd::Zero(2);
  REQUIRE_THROWS_AS(decoupling_check(2, 0.1, m2, u2, 10, 10, plain, 0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(decoupling_check(2, 0.1, m2, u2, 1, 10, dist, 0),
                    std::invalid_argument);
  const Eigen::MatrixXd m3 = Eigen::MatrixXd::Identity(3, 3);
  REQUIRE_THROWS_AS(decoupling_check(2, 0.1, m3, u2, 10, 10, dist, 0),
                    std::invalid_argument);
}

TEST_CASE("region volume closed forms take their known values") {
  REQUIRE(region_volume_reference(2, 2.0) ==
          Catch::Approx(16.0 * std::log(4.0) - 12.0).epsilon(1e-14));
  REQUIRE(region_volume_reference(2, 2.0) == Catch::Approx(10.1807).margin(2e-2));
  REQUIRE(region_volume_reference(2, 1.0) == 0.0);
  REQUIRE(region_volume_reference(3, 0.5) == 0.0);
  REQUIRE(region_volume_reference(2, 1.0 + 1e-9) <= 1e-8);
  REQUIRE(region_volume_reference(2, 1.2) < region_volume_reference(2, 1.5));
  REQUIRE(region_volume_reference(2, 1.5) < region_volume_reference(2, 3.0));
  REQUIRE_THROWS_AS(region_volume_reference(1, 2.0), std::invalid_argument);
  REQUIRE_THROWS_AS(region_volume_reference(5, 2.0), std::invalid_argument);
}

TEST_CASE("quadrature route matches the polynomial closed forms") {
  for (double s : {1.3, 1.7, 2.5}) {
    const double t3 = std::pow(s, 3);
    REQUIRE(region_volume_reference(3, s) ==
            Catch::Approx(detail::region_volume_series(3, t3)).epsilon(1e-6));
    const double t4 = std::pow(s, 4);
    REQUIRE(region_volume_reference(4, s) ==
            Catch::Approx(detail::region_volume_series(4, t4)).epsilon(1e-5));
  }
}

TEST_CASE("Monte Carlo region volumes agree with the references") {
  for (const auto& row : region_volume_check(2, {1.5, 2.0}, 200000, 5150)) {
    REQUIRE(row.passed);
    REQUIRE(row.mc_se > 0.0);
  }
  for (const auto& row : region_volume_check(3, {1.3}, 100000, 5151)) REQUIRE(row.passed);
  for (const auto& row : region_volume_check(4, {1.2}, 100000, 5152)) REQUIRE(row.passed);
  REQUIRE_THROWS_AS(region_volume_check(1, {1.5}, 1000, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(region_volume_check(2, {1.5}, 50, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(region_volume_check(2, {1.0}, 1000, 0), std::invalid_argument);
}

TEST_CASE("operator norm exceedance frequencies behave at both extremes") {
  const auto rows = operator_norm_tail(goe(200, 77), 1000, {-3.0, 0.5, 100.0});
  REQUIRE(rows.size() == 3);
  REQUIRE(rows[0].frequency == 1.0);  // threshold zero
  REQUIRE(rows[1].frequency <= 1e-3);
  REQUIRE(rows[2].frequency == 0.0);
  REQUIRE(rows[1].threshold == Catch::Approx(3.5 * std::sqrt(200.0)).margin(1e-9));
  REQUIRE_THROWS_AS(operator_norm_tail(goe(10, 0), 50, {0.0}), std::invalid_argument);
}
