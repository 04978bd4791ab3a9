#include "spillover/rng.hpp"

#include <cmath>

namespace spillover {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t SplitMix64::next_u64() {
  state_ += kGamma;
  return mix(state_);
}

double SplitMix64::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int SplitMix64::next_int(int lo, int hi) {
  const int span = hi - lo + 1;
  int v = lo + static_cast<int>(next_double() * span);
  return v > hi ? hi : v;
}

double SplitMix64::next_normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 shifted away from 0 so the log is finite.
  double u1 = next_double();
  const double u2 = next_double();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

SplitMix64 SplitMix64::split(std::uint64_t key) const {
  // Mix the key twice against the current state so nearby keys land far apart.
  return SplitMix64(mix(state_ ^ mix(key + kGamma)));
}

}  // namespace spillover
