#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace isofed {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the i-th draw is a pure function of (key, i).
///
/// Satisfies UniformRandomBitGenerator so it plugs into the <random>
/// distributions. Independent streams are obtained with derive(), which
/// hashes tags into a fresh key; no state is shared between streams, so
/// per-client generators can be handed to worker threads freely.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr explicit CounterRng(std::uint64_t key = 0) : key_(mix64(key)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() {
    return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  constexpr double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  /// Uniform integer in [0, n). Uses rejection to stay unbiased.
  constexpr std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r = (*this)();
    while (r >= limit) r = (*this)();
    return r % n;
  }

  /// Child stream keyed by this stream's key and the given tags. Does not
  /// advance this stream.
  constexpr CounterRng derive(std::initializer_list<std::uint64_t> tags) const {
    std::uint64_t k = key_;
    for (std::uint64_t t : tags) k = mix64(k ^ mix64(t + 0x632be59bd9b4e019ULL));
    CounterRng child;
    child.key_ = k;
    return child;
  }

  constexpr std::uint64_t key() const { return key_; }
  constexpr std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace isofed
