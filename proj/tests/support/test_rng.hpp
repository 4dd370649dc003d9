#pragma once

// Deterministic random helpers for tests.  Raw mt19937_64 bits are mapped to
// doubles by hand so sequences do not depend on the standard library's
// distribution implementations.

#include <cstdint>
#include <random>

namespace testsupport {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform in [0, 1).
  double unit() { return (eng_() >> 11) * 0x1.0p-53; }

  /// Uniform in [a, b).
  double uniform(double a, double b) { return a + (b - a) * unit(); }

  /// Uniform integer in [a, b] inclusive.
  int int_in(int a, int b) {
    return a + static_cast<int>(unit() * (b - a + 1));
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = unit(), u2 = unit();
    while (u1 <= 1e-300) u1 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace testsupport
