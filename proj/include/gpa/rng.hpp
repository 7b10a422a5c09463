#pragma once

#include <cstdint>
#include <limits>

namespace gpa {

/// Counter-based 64-bit generator: the k-th output is a fixed bijective mix of
/// (key, k), so a run is fully described by its seed and the number of
/// variates consumed. The mixing function is the SplitMix64 finalizer applied
/// to key + (k + 1) * golden-gamma.
///
/// Stream order used by the simulators (part of the reproducibility contract):
///   seed graph:  one variate per seed vertex location (i.i.d. placement only)
///   each step:   newcomer location, then per edge the target draws, then per
///                edge the acceptance draw (dustbin process only).
/// The exact per-process layout is documented next to each step function.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + (++counter_) * kGamma); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, bound), bound > 0. Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) {
    while (true) {
      const unsigned __int128 product = static_cast<unsigned __int128>((*this)()) * bound;
      const auto low = static_cast<std::uint64_t>(product);
      if (low >= bound || low >= (-bound) % bound) return static_cast<std::uint64_t>(product >> 64);
    }
  }

  std::uint64_t consumed() const { return counter_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace gpa
