#pragma once

// Seeded randomness with results that do not depend on the standard
// library's distribution implementations, so generated files are identical
// across toolchains.

#include <cstdint>
#include <random>
#include <string_view>

namespace conceptlab {

using Rng = std::mt19937_64;

// Uniform integer in [0, n), n > 0 (rejection sampling, no modulo bias).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - (Rng::max() % n + 1) % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x > limit);
  return x % n;
}

// Uniform double in [0, 1).
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// FNV-1a, used to derive stable per-item seeds from names.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace conceptlab
