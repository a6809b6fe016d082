#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace capfield {

// All randomness in the library flows through this header. std::mt19937_64
// has a fully specified output sequence, but the standard distribution
// adaptors do not, so we layer portable transforms on top of the raw engine.
// Every sequence produced here is identical across compilers and platforms.

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent child seed from a root seed and a purpose label.
// Mixing the label through FNV-1a and the result through splitmix64 keeps
// streams for different purposes decorrelated even for adjacent root seeds.
inline std::uint64_t child_seed(std::uint64_t root, std::string_view purpose) {
  std::uint64_t state = root ^ fnv1a64(purpose);
  return splitmix64(state);
}

// Uniform double in [0, 1) using the top 53 bits of the engine output.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Standard normal via Box-Muller. Stateless between calls: each call burns
// two engine draws and returns one variate, so sequences stay reproducible
// regardless of call interleaving.
inline double normal01(Rng& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  // Guard the log; u1 == 0 occurs with probability 2^-53 per draw.
  while (u1 <= 0.0) u1 = uniform01(rng);
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace capfield
