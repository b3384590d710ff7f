#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

namespace res {

/// SplitMix64 finalizer. Used to derive well-separated child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for realization `index` of stream `stream` under `master`.
constexpr std::uint64_t child_seed(std::uint64_t master, std::uint64_t index,
                                   std::uint64_t stream = 0) noexcept {
  return mix_seed(mix_seed(mix_seed(master) ^ index) + stream);
}

/// Seeded random stream with platform-independent variates.
///
/// The standard distributions are implementation-defined, so uniform draws
/// are built directly from the 64-bit engine output. Identical seeds give
/// bit-identical sequences on every conforming platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double canonical() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi].
  double uniform(double lo, double hi) { return lo + (hi - lo) * canonical(); }

  /// Uniform on (0, 1].
  double uniform_open_zero() { return 1.0 - canonical(); }

  /// Uniform integer in [0, bound). Unbiased (rejection on the short tail).
  std::uint64_t index(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::index: bound must be positive");
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace res
