#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace strokepatch {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

}  // namespace detail

/// Deterministic, splittable random generator (xoshiro256++ core seeded via
/// splitmix64). Streams derived through split() are independent of draw
/// history, so a (seed, index) pair always names the same stream regardless
/// of evaluation order or parallelism. Distribution code is written out
/// explicitly; the standard library's distributions are not portable
/// bit-for-bit.
class Rng {
public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : base_(mix(seed, stream)) {
    std::uint64_t x = base_;
    for (auto& w : state_) w = detail::splitmix64(x);
  }

  /// Independent stream keyed on this generator's identity, not its state.
  Rng split(std::uint64_t key) const { return Rng(base_, key); }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  /// Standard normal draw (Box-Muller, pair cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Unbiased integer in [0, n), rejection sampled. n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

private:
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed;
    std::uint64_t h = detail::splitmix64(x);
    x ^= stream + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return detail::splitmix64(x);
  }

  std::uint64_t base_;
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream tags for the pipeline's derived generators.
namespace stream {
inline constexpr std::uint64_t kPatch = 0x5041544348ULL;    // patch rendering, split by index
inline constexpr std::uint64_t kInit = 0x494e4954ULL;       // model parameter init
inline constexpr std::uint64_t kShuffle = 0x53485546ULL;    // per-epoch shuffles
inline constexpr std::uint64_t kCorrupt = 0x434f5252ULL;    // per-(epoch, patch) corruption
}  // namespace stream

}  // namespace strokepatch
