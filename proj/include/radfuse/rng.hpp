// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace radfuse {

// SplitMix64 (Steele, Lea, Flood 2014). Every random stream in the library is
// a SplitMix64 seeded from a key derived with stream_key(), so results depend
// only on the key and never on call order between unrelated consumers.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r = next();
    while (r >= limit) r = next();
    return r % n;
  }

  /// Standard normal via Box-Muller; consumes exactly two words.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b) noexcept {
  SplitMix64 m(a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2)));
  return m.next();
}

inline std::uint64_t stream_key(std::uint64_t seed) noexcept { return SplitMix64(seed).next(); }

template <typename... Rest>
std::uint64_t stream_key(std::uint64_t seed, std::uint64_t part, Rest... rest) noexcept {
  return stream_key(mix_keys(seed, part), static_cast<std::uint64_t>(rest)...);
}

inline std::uint64_t stream_key(std::uint64_t seed, std::string_view path) noexcept {
  return stream_key(seed, fnv1a64(path));
}

}  // namespace radfuse
