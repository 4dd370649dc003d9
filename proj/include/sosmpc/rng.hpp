#pragma once

#include <cstdint>
#include <random>

namespace sosmpc {

/// Deterministic random source.  The engine's output sequence is pinned by
/// the language standard and the value mappings below are explicit, so equal
/// seeds produce identical streams on every platform and toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  /// Uniform integer in [lo, hi], both ends included.
  int int_in(int lo, int hi) {
    const int span = hi - lo + 1;
    const int k = static_cast<int>(unit() * span);
    return lo + (k >= span ? span - 1 : k);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace sosmpc
