#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace frebis {

/// Seedable generator used by every stochastic operation.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Distributions are derived here from raw 64-bit draws instead of
/// the <random> distribution classes, whose algorithms are left to the
/// implementation, so streams are identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Uses rejection to avoid modulo bias.
  std::uint64_t index(std::uint64_t n);

  /// Standard normal via Box-Muller; one draw per call, no cached spare.
  double normal();

  /// Text form of the full engine state; restores bit-exactly.
  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

}  // namespace frebis
