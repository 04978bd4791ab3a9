#pragma once

#include <cstdint>

namespace spillover {

/// SplitMix64: a counter-based 64-bit generator (Steele, Lea & Flood 2014).
/// Output r is a bijective mix of seed + r * golden gamma, so streams derived
/// with `split` are independent of invocation order and byte-reproducible
/// across platforms. All simulation randomness in this project flows through
/// this generator; std:: distributions are avoided because their sequences
/// are implementation-defined.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double next_double();

  /// Uniform integer on {lo, ..., hi} by scaled 53-bit draw.
  int next_int(int lo, int hi);

  /// Standard normal via Box-Muller; two deviates per pair of uniforms.
  double next_normal();

  /// Independent child stream keyed by `key` (replication index, module tag).
  SplitMix64 split(std::uint64_t key) const;

  static constexpr const char* name() { return "splitmix64"; }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace spillover
