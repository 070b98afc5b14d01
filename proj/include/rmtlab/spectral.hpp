#pragma once

// Spectral decomposition and the derived least-singular-value statistics.
//
// For a symmetric matrix A and a real location lambda, A - lambda*I is
// symmetric with singular values |e_k - lambda|, so every statistic here is
// a function of the eigenvalues (ascending) and, where needed, the
// eigenvectors.  mu_k denotes the k-th largest singular value of
// (A - lambda*I)^{-1}, i.e. the reciprocal of the k-th smallest distance
// from lambda to the spectrum.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "rmtlab/ensemble.hpp"

namespace rmtlab {

// Eigensolver did not converge or failed its internal consistency gate.
// Carries the seed of the offending matrix so the trial can be replayed.
struct SolverFailure : std::runtime_error {
  explicit SolverFailure(std::uint64_t seed_, const std::string& what_)
      : std::runtime_error(what_ + " (matrix seed " + std::to_string(seed_) + ")"),
        seed(seed_) {}
  std::uint64_t seed;
};

// A location coincides exactly with an eigenvalue, so inverse-power
// statistics are undefined there.
struct SingularLocation : std::domain_error {
  using std::domain_error::domain_error;
};

struct Spectrum {
  int n = 0;
  std::uint64_t seed = 0;                  // seed of the decomposed matrix, if known
  Eigen::VectorXd eigenvalues;             // ascending
  Eigen::MatrixXd vectors;                 // column k pairs with eigenvalues[k]; may be empty
  double residual_norm = std::numeric_limits<double>::quiet_NaN();
  bool has_vectors() const { return vectors.size() > 0; }
};

// Evaluation locations with the bulk and separation filters they must obey:
// every lambda lies in [-(2-kappa)*sqrt(n), (2-kappa)*sqrt(n)] and distinct
// lambdas are pairwise at least delta_sep * n^(sep_exponent - 1/2) apart.
// sep_exponent = 1 is the macroscopic regime (separation on the sqrt(n)
// scale); values in (0,1) are mesoscopic.
struct LocationSet {
  std::vector<double> lambdas;
  double kappa = 0.5;
  double delta_sep = 0.5;
  double sep_exponent = 1.0;
};

inline double bulk_halfwidth(double kappa, int n) {
  return (2.0 - kappa) * std::sqrt(static_cast<double>(n));
}

inline double required_separation(double delta_sep, double sep_exponent, int n) {
  return delta_sep * std::pow(static_cast<double>(n), sep_exponent - 0.5);
}

// Validating factory; throws on any violated bound.
inline LocationSet make_location_set(std::vector<double> lambdas, double kappa,
                                     double delta_sep, double sep_exponent, int n) {
  if (lambdas.empty()) throw std::invalid_argument("location set: empty");
  if (!(kappa > 0.0 && kappa < 2.0))
    throw std::invalid_argument("location set: kappa must lie in (0,2)");
  if (!(delta_sep > 0.0))
    throw std::invalid_argument("location set: delta_sep must be positive");
  if (!(sep_exponent > 0.0 && sep_exponent <= 1.0))
    throw std::invalid_argument("location set: sep_exponent must lie in (0,1]");
  const double half = bulk_halfwidth(kappa, n);
  for (double l : lambdas)
    if (std::fabs(l) > half)
      throw std::invalid_argument("location set: location outside the spectral bulk");
  const double sep = required_separation(delta_sep, sep_exponent, n);
  // Gaps equal to the scale up to rounding are legal: locations are often
  // constructed at exactly this spacing, and center +/- sep/2 need not
  // reproduce the gap bitwise.
  const double sep_floor = sep * (1.0 - 4.0 * std::numeric_limits<double>::epsilon());
  for (std::size_t i = 0; i < lambdas.size(); ++i)
    for (std::size_t j = i + 1; j < lambdas.size(); ++j)
      if (std::fabs(lambdas[i] - lambdas[j]) < sep_floor)
        throw std::invalid_argument("location set: locations closer than the separation scale");
  LocationSet s;
  s.lambdas = std::move(lambdas);
  s.kappa = kappa;
  s.delta_sep = delta_sep;
  s.sep_exponent = sep_exponent;
  return s;
}

// Symmetric eigendecomposition (Householder tridiagonalization + implicitly
// shifted iteration).  Cheap trace identity always checked; with vectors the
// worst eigenpair residual max_k ||A v_k - e_k v_k||_2 is stored and gated.
inline Spectrum decompose(const SampledMatrix& m, bool want_vectors = false) {
  Spectrum s;
  s.n = m.n;
  s.seed = m.seed;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.compute(m.mat, want_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw SolverFailure(m.seed, "symmetric eigensolver did not converge");
  s.eigenvalues = es.eigenvalues();

  const double tr_direct = m.mat.trace();
  const double tr_spectral = s.eigenvalues.sum();
  const double tr_tol =
      1e-8 * (1.0 + s.eigenvalues.cwiseAbs().sum() + std::fabs(tr_direct));
  if (std::fabs(tr_direct - tr_spectral) > tr_tol)
    throw SolverFailure(m.seed, "eigensolver trace identity violated");

  if (want_vectors) {
    s.vectors = es.eigenvectors();
    const Eigen::MatrixXd r =
        m.mat * s.vectors - s.vectors * s.eigenvalues.asDiagonal();
    s.residual_norm = r.colwise().norm().maxCoeff();
    const double gate = 1e-8 * std::sqrt(static_cast<double>(std::max(1, m.n)));
    if (!(s.residual_norm <= gate))
      throw SolverFailure(m.seed, "eigenpair residual above tolerance");
  }
  return s;
}

// Convenience overload for explicitly constructed matrices.
inline Spectrum decompose(const Eigen::MatrixXd& a, bool want_vectors = false,
                          std::uint64_t seed = 0) {
  SampledMatrix m;
  m.n = static_cast<int>(a.rows());
  m.seed = seed;
  m.mat = a;
  return decompose(m, want_vectors);
}

// Distance from lambda to the spectrum == least singular value of A - lambda*I.
inline double sigma_min_at(const Spectrum& s, double lambda) {
  const auto& e = s.eigenvalues;
  if (e.size() == 0) throw std::invalid_argument("sigma_min_at: empty spectrum");
  const double* begin = e.data();
  const double* end = e.data() + e.size();
  const double* it = std::lower_bound(begin, end, lambda);
  double best = std::numeric_limits<double>::infinity();
  if (it != end) best = std::min(best, std::fabs(*it - lambda));
  if (it != begin) best = std::min(best, std::fabs(*(it - 1) - lambda));
  return best;
}

// All n distances |e_k - lambda| in ascending order.
inline std::vector<double> sorted_distances(const Spectrum& s, double lambda) {
  std::vector<double> d(static_cast<std::size_t>(s.eigenvalues.size()));
  for (std::size_t k = 0; k < d.size(); ++k)
    d[k] = std::fabs(s.eigenvalues(static_cast<Eigen::Index>(k)) - lambda);
  std::sort(d.begin(), d.end());
  return d;
}

// k-th largest singular value of (A - lambda*I)^{-1}, k in [1, n].
inline double mu_k(const Spectrum& s, double lambda, int k) {
  const int n = static_cast<int>(s.eigenvalues.size());
  if (k < 1 || k > n) throw std::invalid_argument("mu_k: k out of range");
  std::vector<double> d(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i)] = std::fabs(s.eigenvalues(i) - lambda);
  std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
  const double dist = d[static_cast<std::size_t>(k - 1)];
  if (dist == 0.0)
    throw SingularLocation("mu_k: location coincides with an eigenvalue");
  return 1.0 / dist;
}

// Weighted l2 norm of the inverse's singular values with log-squared weights:
//   star_norm^2 = sum_k mu_k^2 * (log2(1+k))^2.
// Base-2 logs make the k = 1 weight exactly 1, so the star norm dominates the
// Hilbert-Schmidt norm of the inverse.
inline double star_norm(const Spectrum& s, double lambda) {
  const auto d = sorted_distances(s, lambda);
  if (!d.empty() && d.front() == 0.0)
    throw SingularLocation("star_norm: location coincides with an eigenvalue");
  double acc = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double mu = 1.0 / d[k];
    const double w = std::log2(2.0 + static_cast<double>(k));  // log2(1 + rank)
    acc += mu * mu * w * w;
  }
  return std::sqrt(acc);
}

// Number of normalized eigenvalues e/sqrt(n) in the closed window
// [E - eta/2, E + eta/2].
inline int counting(const Spectrum& s, double energy, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("counting: eta must be positive");
  const double scale = std::sqrt(static_cast<double>(s.n));
  const double lo = (energy - 0.5 * eta) * scale;
  const double hi = (energy + 0.5 * eta) * scale;
  const double* begin = s.eigenvalues.data();
  const double* end = begin + s.eigenvalues.size();
  return static_cast<int>(std::upper_bound(begin, end, hi) -
                          std::lower_bound(begin, end, lo));
}

namespace detail {

// Indices 0..n-1 ordered by increasing distance to lambda; ties broken by
// the smaller eigenvalue index, which makes every rank total and the map
// below a bijection even on degenerate spectra.
inline std::vector<int> distance_order(const Spectrum& s, double lambda) {
  const int n = static_cast<int>(s.eigenvalues.size());
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double da = std::fabs(s.eigenvalues(a) - lambda);
    const double db = std::fabs(s.eigenvalues(b) - lambda);
    if (da != db) return da < db;
    return a < b;
  });
  return idx;
}

}  // namespace detail

// Rank transport between locations: the eigenvalue ranked k (1 = closest)
// at lambda_i is assigned its rank at lambda_j.  For fixed (lambda_i,
// lambda_j) the map k -> c(k) is a permutation of 1..n, and swapping the
// locations inverts it.
inline int c_index_map(const Spectrum& s, double lambda_i, double lambda_j, int k) {
  const int n = static_cast<int>(s.eigenvalues.size());
  if (k < 1 || k > n) throw std::invalid_argument("c_index_map: k out of range");
  if (sigma_min_at(s, lambda_i) == 0.0 || sigma_min_at(s, lambda_j) == 0.0)
    throw SingularLocation("c_index_map: location coincides with an eigenvalue");
  const auto order_i = detail::distance_order(s, lambda_i);
  const auto order_j = detail::distance_order(s, lambda_j);
  const int which = order_i[static_cast<std::size_t>(k - 1)];
  for (int r = 0; r < n; ++r)
    if (order_j[static_cast<std::size_t>(r)] == which) return r + 1;
  throw std::logic_error("c_index_map: rank not found");  // unreachable
}

// Fraction of coordinates of a unit eigenvector with |v_j| >= c / sqrt(n).
inline double delocalization_fraction(const Eigen::VectorXd& v, double threshold_coeff) {
  const int n = static_cast<int>(v.size());
  if (n == 0) throw std::invalid_argument("delocalization_fraction: empty vector");
  const double norm = v.norm();
  if (std::fabs(norm - 1.0) > 1e-8)
    throw std::invalid_argument("delocalization_fraction: vector must be unit norm");
  const double thr = threshold_coeff / std::sqrt(static_cast<double>(n));
  int count = 0;
  for (int j = 0; j < n; ++j)
    if (std::fabs(v(j)) >= thr) ++count;
  return static_cast<double>(count) / static_cast<double>(n);
}

inline double operator_norm(const Spectrum& s) {
  if (s.eigenvalues.size() == 0) throw std::invalid_argument("operator_norm: empty spectrum");
  return std::max(std::fabs(s.eigenvalues(0)),
                  std::fabs(s.eigenvalues(s.eigenvalues.size() - 1)));
}

}  // namespace rmtlab
