#pragma once

// Deterministic, parallel-safe random number generation.
//
// Every trial draws from its own engine seeded purely from
// (master_seed, trial_index, stream), so results never depend on how trials
// are scheduled across worker threads.  All variate paths consume a fixed
// number of engine outputs per draw -- no data-dependent rejection loops --
// which keeps draw streams aligned under refactoring and across platforms.

#include <cmath>
#include <cstdint>
#include <limits>

namespace rmtlab {

// SplitMix64 finalizer (Steele/Lea/Flood).  Bijective 64-bit mixer.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed for one logical stream of one trial.  Chained finalizers keep the
// three inputs from cancelling linearly.
inline constexpr std::uint64_t derive_seed(std::uint64_t master_seed,
                                           std::uint64_t trial_index,
                                           std::uint64_t stream = 0) noexcept {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ splitmix64(trial_index + 0xD1B54A32D192ED03ULL));
  h = splitmix64(h ^ splitmix64(stream + 0x8BB84B93962EACC9ULL));
  return h;
}

// xoshiro256++ (Blackman/Vigna), seeded by SplitMix64 expansion.
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Xoshiro256pp(std::uint64_t seed = 0) noexcept {
    std::uint64_t sm = seed;
    for (auto& w : s_) {
      sm += 0x9E3779B97F4A7C15ULL;
      std::uint64_t z = sm;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
      w = z ^ (z >> 31);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4]{};
};

// Uniform on the open interval (0,1): 53 random bits plus a half-ulp offset,
// so 0 and 1 are unreachable and the inverse normal CDF below is always
// well defined.
inline double uniform01(Xoshiro256pp& rng) noexcept {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

// Inverse of the standard normal CDF, Acklam's rational approximation.
// Relative error below 1.2e-9 over (0,1); fixed instruction path and one
// uniform per normal, which is what the sampling contract requires.
inline double normal_icdf(double p) {
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  static constexpr double p_low = 0.02425;

  if (!(p > 0.0 && p < 1.0)) return std::numeric_limits<double>::quiet_NaN();
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double q = std::sqrt(-2.0 * std::log1p(-p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

// Two-sided normal quantile for a central confidence level, e.g. 0.95 -> 1.96.
inline double normal_two_sided_quantile(double level) {
  return normal_icdf(0.5 + 0.5 * level);
}

inline double draw_normal(Xoshiro256pp& rng) { return normal_icdf(uniform01(rng)); }

}  // namespace rmtlab
