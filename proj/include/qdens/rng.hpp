#pragma once

#include <cstdint>
#include <limits>

// Pseudo-random number generation.
//
// All randomness in the library flows from explicit 64-bit seeds through
// the stream derivation below; there is no hidden entropy.  A stream is
// identified by (seed, tag, a, b): the tag separates usages (MC points,
// net randomizations, pilot samples, ...) and (a, b) are usage-specific
// coordinates, typically (n, replicate).  Derivation chains the SplitMix64
// finalizer over the tuple, which gives well-separated xoshiro256++ states
// for distinct tuples; replicates can therefore run in parallel on
// disjoint streams.

namespace qdens::rng {

inline constexpr std::uint64_t kTagMcPoints = 0x01;
inline constexpr std::uint64_t kTagRandomization = 0x02;
inline constexpr std::uint64_t kTagPilot = 0x03;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// xoshiro256++ (Blackman & Vigna, public domain reference implementation).
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t seed) {
    // SplitMix64 chain seeding, as recommended by the authors.
    std::uint64_t x = seed;
    for (auto& word : state_) {
      x = splitmix64(x);
      word = x;
    }
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double strictly inside (0,1): 53 random bits, centered on the
  // cell so neither endpoint can be produced.
  double uniform_open() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform 32-bit value with the top `bits` bits random, rest zero.
  std::uint32_t bits32() { return static_cast<std::uint32_t>((*this)() >> 32); }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

inline constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                           std::uint64_t tag, std::uint64_t a,
                                           std::uint64_t b) {
  std::uint64_t x = splitmix64(seed ^ 0x6a09e667f3bcc908ULL);
  x = splitmix64(x ^ tag);
  x = splitmix64(x ^ a);
  x = splitmix64(x ^ b);
  return x;
}

inline Xoshiro256pp make_stream(std::uint64_t seed, std::uint64_t tag,
                                std::uint64_t a, std::uint64_t b) {
  return Xoshiro256pp(derive_seed(seed, tag, a, b));
}

}  // namespace qdens::rng
