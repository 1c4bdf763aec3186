#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace minnow {

/// pcg32: 64-bit-state linear congruential generator with XSH-RR output,
/// matching the reference pcg32 stream (pcg32_srandom_r / pcg32_random_r /
/// pcg32_boundedrand_r) bit for bit. All randomness in the pipeline flows
/// through this generator so an independent implementation can reproduce
/// every draw from the seed alone:
///
///   state' = state * 6364136223846793005 + inc
///   out    = rotr32(((state >> 18) ^ state) >> 27, state >> 59)
///
/// where inc = (stream << 1) | 1 and seeding performs
/// state = 0; step(); state += seed; step().
class Pcg32 {
 public:
  Pcg32() : Pcg32(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL) {}

  Pcg32(uint64_t seed, uint64_t stream) {
    state_ = 0;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  uint32_t next_u32() {
    const uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    const uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  uint64_t next_u64() {
    const uint64_t hi = next_u32();
    return (hi << 32u) | next_u32();
  }

  /// Unbiased draw in [0, bound) via the reference rejection scheme.
  uint32_t below(uint32_t bound) {
    const uint32_t threshold = (0u - bound) % bound;
    for (;;) {
      const uint32_t r = next_u32();
      if (r >= threshold) {
        return r % bound;
      }
    }
  }

  /// 53-bit uniform in [0, 1).
  double uniform01() {
    return static_cast<double>(next_u64() >> 11u) * 0x1.0p-53;
  }

  /// Box-Muller normal draw. Always consumes exactly two uniforms so the
  /// stream position is a pure function of the draw count.
  double normal(double mean, double stddev) {
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    return mean + stddev * r * std::cos(two_pi * u2);
  }

  /// Fisher-Yates shuffle, high index down, using below().
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = below(static_cast<uint32_t>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 0;
};

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 14695981039346656037ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

/// Named substream of the global seed. Every stochastic component draws from
/// derive_stream(seed, label) where the label encodes purpose (and epoch,
/// word, ... where applicable), so components never share or race a stream.
inline Pcg32 derive_stream(uint64_t seed, std::string_view label) {
  return Pcg32(seed, fnv1a64(label));
}

}  // namespace minnow
