#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bss {

/// Seeded Gaussian variate stream. One Box-Muller cosine draw per variate,
/// built on mt19937_64, so the sequence is a function of the seed alone and
/// does not depend on the standard library's normal_distribution.
class GaussianRng {
 public:
  explicit GaussianRng(std::uint64_t seed) : eng_(seed) {}

  double operator()() {
    // u1 in (0,1], u2 in [0,1), both from the top 53 bits.
    const double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * kInv53;
    const double u2 = static_cast<double>(eng_() >> 11) * kInv53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  /// Uniform in [0,1).
  double uniform() { return static_cast<double>(eng_() >> 11) * kInv53; }

  std::mt19937_64& engine() { return eng_; }

 private:
  static constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 eng_;
};

}  // namespace bss
