#pragma once

#include <cstdint>

namespace mht {

/// SplitMix64 generator. Chosen over std::mt19937_64 so that streams are
/// cheap to fork per iteration index and the sequence is identical on every
/// platform/compiler (the distributions below avoid libstdc++-specific
/// rejection loops too).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0,n). n == 0 is a caller bug; returns 0.
  std::size_t uniform_index(std::size_t n) {
    if (n <= 1) {
      next();  // keep the draw count independent of n
      return 0;
    }
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  /// Deterministic child stream: same (seed, stream) always yields the same
  /// sequence, distinct streams are decorrelated by a golden-ratio jump.
  static Rng child(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed ^ (0x9e3779b97f4a7c15ull * (stream + 0x51ed2701u)));
    r.next();
    return r;
  }

 private:
  std::uint64_t state_;
};

}  // namespace mht
