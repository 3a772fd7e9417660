#pragma once

// Counter-based pseudo-random generation. Every draw is a pure function of
// (seed, stream, counter), so per-column streams are independent and any
// value can be recomputed without shared state. The mixer is splitmix64.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace phewas::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// 64-bit FNV-1a, used to derive stream ids from column names.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::uint64_t at(std::uint64_t seed, std::uint64_t stream,
                        std::uint64_t counter) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ counter);
}

// Uniform in [0,1) with 53 bits of precision.
inline double uniform(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t counter) {
  return static_cast<double>(at(seed, stream, counter) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller over counters (2k, 2k+1).
inline double normal(std::uint64_t seed, std::uint64_t stream,
                     std::uint64_t k) {
  const double u1 =
      (static_cast<double>(at(seed, stream, 2 * k) >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform(seed, stream, 2 * k + 1);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(6.283185307179586476925286766559 * u2);
}

// Order-sensitive running digest for reproducibility checks.
class Digest {
 public:
  void mix(std::uint64_t v) { state_ = splitmix64(state_ ^ v); }
  void mix(std::string_view s) { mix(fnv1a(s)); }
  void mix(double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    __builtin_memcpy(&bits, &v, sizeof(bits));
    mix(bits);
  }
  std::uint64_t value() const { return state_; }
  std::string hex() const {
    static const char* k = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = state_;
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = k[v & 0xF];
      v >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t state_ = 0x2545F4914F6CDD1DULL;
};

}  // namespace phewas::rng
