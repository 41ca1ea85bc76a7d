#pragma once

#include <cmath>
#include <cstdint>

#include "rgbn/common.hpp"

namespace rgbn {

// Counter-based generator: the draw sequence is a pure function of (key, ctr),
// so independent streams are cheap and replay is exact.
struct RngState {
  std::uint64_t key = 0;
  std::uint64_t ctr = 0;
};

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27; z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t next_u64(RngState& s) {
  return mix64(s.key + 0x9E3779B97F4A7C15ull * ++s.ctr);
}

// substream with an independent key; does not disturb the parent counter
inline RngState derive(const RngState& s, std::uint64_t tag) {
  return RngState{mix64(s.key ^ mix64(tag + 0x9E3779B97F4A7C15ull)), 0};
}

inline RngState seed_rng(std::uint64_t seed) { return RngState{mix64(seed + 0x9E3779B97F4A7C15ull), 0}; }

// open interval (0,1); never returns an endpoint
inline double uniform01(RngState& s) {
  return (static_cast<double>(next_u64(s) >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

inline double uniform_range(RngState& s, double lo, double hi) {
  return lo + (hi - lo) * uniform01(s);
}

inline std::uint64_t uniform_index(RngState& s, std::uint64_t n) {
  // modulo bias is negligible at 64 bits for the n used here
  return next_u64(s) % n;
}

inline double normal01(RngState& s) {
  double u1 = uniform01(s), u2 = uniform01(s);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace rgbn
