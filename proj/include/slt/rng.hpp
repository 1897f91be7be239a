#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace slt {

// Deterministic RNG. The mt19937_64 engine is fully specified by the
// standard and all distributions below are implemented from raw bits, so a
// given seed produces the same stream on every platform and toolchain.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1]; safe to feed into log().
  double uniform01_open_left() { return 1.0 - uniform01(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Inclusive bounds.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(engine_() % span);
  }

  // Box-Muller, cosine branch only, so draw counts stay in lockstep with the
  // call sites.
  double gaussian() {
    const double u1 = uniform01_open_left();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double gaussian(double mean, double sigma) {
    return mean + sigma * gaussian();
  }

  // Gumbel(0,1) via inverse CDF.
  double gumbel() { return -std::log(-std::log(uniform01_open_left())); }

  // Independent child stream keyed on (root seed, stream_id). Derivation
  // ignores how much of this stream has been consumed, so per-episode
  // streams are stable no matter the generation order.
  Rng derive(uint64_t stream_id) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream_id + 0x7f4a7c15ull)));
  }

  uint64_t seed() const { return seed_; }

  static uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace slt
