#pragma once

// Sampling of Wigner-type random symmetric matrices.
//
// Matrices are unnormalized: entries have O(1) variance, so the spectrum
// lives on the scale sqrt(n) and the spectral edge sits near 2*sqrt(n) for
// unit entry variance.  Off-diagonal entries (i < j) are iid copies of the
// entry law; diagonal entries are iid copies of diag_scale times the same
// law.  The classical GOE convention (diagonal variance twice the
// off-diagonal variance) corresponds to diag_scale = sqrt(2).
//
// Determinism contract: entry (i, j), i <= j, of trial t depends only on
// (master_seed, t) and the documented draw order -- the upper triangle is
// filled column by column, rows 0..j within column j.  Each draw consumes a
// fixed number of engine outputs, so streams are reproducible bit for bit
// on a given build regardless of worker count.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

#include "rmtlab/rng.hpp"

namespace rmtlab {

enum class EntryKind { gaussian, uniform_centered, rademacher, gaussian_divisible };

// Law of the non-Gaussian component of a Gaussian-divisible entry.  All
// three are centered with unit variance before scaling; the smoothed
// two-point law mixes a Rademacher sign with a narrow uniform so its density
// stays bounded.
enum class BaseKind { uniform_centered, shifted_exponential_symmetrized, two_point_smoothed };

struct EntryDistribution {
  EntryKind kind = EntryKind::gaussian;
  double variance = 1.0;   // total variance of one off-diagonal entry
  double sigma0 = 0.5;     // Gaussian component weight, gaussian_divisible only
  BaseKind base_kind = BaseKind::uniform_centered;
};

struct EnsembleSpec {
  int n = 0;
  EntryDistribution entry{};
  double diag_scale = 1.0;
  std::uint64_t master_seed = 0;
};

struct SampledMatrix {
  int n = 0;
  std::uint64_t trial_index = 0;
  std::uint64_t seed = 0;  // derived seed actually used for the entry stream
  Eigen::MatrixXd mat;
};

inline void validate_spec(const EnsembleSpec& spec) {
  if (spec.n < 1) throw std::invalid_argument("ensemble: n must be >= 1");
  if (!(spec.entry.variance > 0.0))
    throw std::invalid_argument("ensemble: entry variance must be positive");
  if (spec.entry.kind == EntryKind::gaussian_divisible &&
      !(spec.entry.sigma0 > 0.0 && spec.entry.sigma0 < 1.0))
    throw std::invalid_argument("ensemble: sigma0 must lie in (0,1)");
  if (!(spec.diag_scale >= 0.0))
    throw std::invalid_argument("ensemble: diag_scale must be >= 0");
}

namespace detail {

// Fixed uniform budget per draw, by kind:
//   gaussian 1, uniform_centered 1, rademacher 1,
//   gaussian_divisible 2 (uniform base) or 3 (exponential / two-point base).
inline double draw_base(BaseKind base, Xoshiro256pp& rng) {
  switch (base) {
    case BaseKind::uniform_centered:
      return std::sqrt(3.0) * (2.0 * uniform01(rng) - 1.0);
    case BaseKind::shifted_exponential_symmetrized: {
      const double e = -std::log(uniform01(rng));  // Exp(1), mean 1, var 1
      const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      return sign * (e - 1.0);
    }
    case BaseKind::two_point_smoothed: {
      // Variance split 0.95 / 0.05 between the sign and the smoothing.
      constexpr double smooth_var = 0.05;
      const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      const double u = 2.0 * uniform01(rng) - 1.0;
      return std::sqrt(1.0 - smooth_var) * sign + std::sqrt(3.0 * smooth_var) * u;
    }
  }
  return 0.0;  // unreachable
}

}  // namespace detail

// One draw of the entry law (unit-variance core scaled to spec variance).
inline double draw_entry(const EntryDistribution& d, Xoshiro256pp& rng) {
  const double scale = std::sqrt(d.variance);
  switch (d.kind) {
    case EntryKind::gaussian:
      return scale * draw_normal(rng);
    case EntryKind::uniform_centered:
      return scale * std::sqrt(3.0) * (2.0 * uniform01(rng) - 1.0);
    case EntryKind::rademacher:
      return scale * (uniform01(rng) < 0.5 ? -1.0 : 1.0);
    case EntryKind::gaussian_divisible: {
      const double z1 = std::sqrt(d.sigma0) * draw_normal(rng);
      const double z2 = std::sqrt(1.0 - d.sigma0) * detail::draw_base(d.base_kind, rng);
      return scale * (z1 + z2);
    }
  }
  return 0.0;  // unreachable
}

namespace detail {

// Streams within one trial.  A minor-coupled draw extends the plain matrix
// stream with a fresh column and corner, so the shared minor is bitwise
// identical to the standalone sample of the same trial.
enum Stream : std::uint64_t { kMatrix = 0, kColumn = 1, kCorner = 2 };

inline void fill_symmetric(const EnsembleSpec& spec, Xoshiro256pp& rng, Eigen::MatrixXd& a) {
  const int n = spec.n;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i <= j; ++i) {
      double v = draw_entry(spec.entry, rng);
      if (i == j) v *= spec.diag_scale;
      a(i, j) = v;
      a(j, i) = v;
    }
  }
}

}  // namespace detail

inline SampledMatrix sample_matrix(const EnsembleSpec& spec, std::uint64_t trial_index) {
  validate_spec(spec);
  SampledMatrix out;
  out.n = spec.n;
  out.trial_index = trial_index;
  out.seed = derive_seed(spec.master_seed, trial_index, detail::Stream::kMatrix);
  Xoshiro256pp rng(out.seed);
  out.mat.resize(spec.n, spec.n);
  detail::fill_symmetric(spec, rng, out.mat);
  return out;
}

// Couples dimensions n and n+1 of the same trial: the (n+1)x(n+1) matrix is
// the n x n sample bordered by a fresh first row/column (off-diagonal law)
// and a fresh (0,0) entry (diagonal law).  Returns (bordered, minor); the
// minor equals the [1..n] x [1..n] principal block of the bordered matrix
// bitwise, and also equals sample_matrix(spec, trial_index).mat bitwise.
inline std::pair<SampledMatrix, SampledMatrix> sample_minor_coupled(
    const EnsembleSpec& spec, std::uint64_t trial_index) {
  SampledMatrix minor = sample_matrix(spec, trial_index);

  SampledMatrix big;
  big.n = spec.n + 1;
  big.trial_index = trial_index;
  big.seed = minor.seed;
  big.mat.resize(spec.n + 1, spec.n + 1);
  big.mat.block(1, 1, spec.n, spec.n) = minor.mat;

  Xoshiro256pp col_rng(derive_seed(spec.master_seed, trial_index, detail::Stream::kColumn));
  for (int i = 0; i < spec.n; ++i) {
    const double v = draw_entry(spec.entry, col_rng);
    big.mat(0, i + 1) = v;
    big.mat(i + 1, 0) = v;
  }
  Xoshiro256pp corner_rng(derive_seed(spec.master_seed, trial_index, detail::Stream::kCorner));
  big.mat(0, 0) = spec.diag_scale * draw_entry(spec.entry, corner_rng);
  return {std::move(big), std::move(minor)};
}

// Presets ------------------------------------------------------------------

inline EnsembleSpec goe(int n, std::uint64_t master_seed) {
  EnsembleSpec s;
  s.n = n;
  s.entry.kind = EntryKind::gaussian;
  s.entry.variance = 1.0;
  s.diag_scale = std::sqrt(2.0);
  s.master_seed = master_seed;
  return s;
}

// Gaussian-divisible default: half the entry variance in the Gaussian
// component, the rest in a centered uniform.
inline EnsembleSpec gaussian_divisible_default(int n, std::uint64_t master_seed) {
  EnsembleSpec s;
  s.n = n;
  s.entry.kind = EntryKind::gaussian_divisible;
  s.entry.variance = 1.0;
  s.entry.sigma0 = 0.5;
  s.entry.base_kind = BaseKind::uniform_centered;
  s.diag_scale = std::sqrt(2.0);
  s.master_seed = master_seed;
  return s;
}

inline const char* to_string(EntryKind k) {
  switch (k) {
    case EntryKind::gaussian: return "gaussian";
    case EntryKind::uniform_centered: return "uniform_centered";
    case EntryKind::rademacher: return "rademacher";
    case EntryKind::gaussian_divisible: return "gaussian_divisible";
  }
  return "?";
}

inline const char* to_string(BaseKind k) {
  switch (k) {
    case BaseKind::uniform_centered: return "uniform_centered";
    case BaseKind::shifted_exponential_symmetrized: return "shifted_exponential_symmetrized";
    case BaseKind::two_point_smoothed: return "two_point_smoothed";
  }
  return "?";
}

}  // namespace rmtlab
