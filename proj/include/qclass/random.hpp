#pragma once

#include <cstdint>
#include <iterator>
#include <string_view>
#include <utility>

namespace qclass {

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// SplitMix64 generator.
///
/// The standard library distributions are implementation-defined, so every
/// draw the toolkit makes goes through the helpers below. This keeps fold
/// plans, embeddings and trained weights reproducible across platforms and
/// across ports to other languages.
///
/// Components never share a generator; each one derives a named substream
/// from the run seed (see substream()), so disabling one stage does not shift
/// the random draws of another.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }

  std::uint64_t operator()() { return next(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  /// Independent generator keyed by name; does not advance this one.
  [[nodiscard]] Rng substream(std::string_view name) const {
    return Rng(splitmix64_mix(state_ ^ fnv1a64(name)));
  }

  [[nodiscard]] Rng substream(std::uint64_t index) const {
    return Rng(splitmix64_mix(state_ ^ splitmix64_mix(index + 0x632be59bd9b4e019ULL)));
  }

  /// Fisher-Yates shuffle driven by below().
  template <std::random_access_iterator It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      using std::swap;
      swap(first[static_cast<std::ptrdiff_t>(i - 1)], first[static_cast<std::ptrdiff_t>(j)]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace qclass
