#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace fscl {

// Deterministic PRNG used everywhere in place of <random> engines and
// distributions, whose algorithms are implementation-defined. Every stream
// of randomness in a run is derived functionally from the master seed via
// mix_seed(master, tag, indices...), so any point of a run can be
// reconstructed without replaying prior draws.
//
// Sub-seed derivation: the tag string is FNV-1a hashed, folded into the
// master seed together with the numeric indices, and the result is pushed
// through two splitmix64 rounds. Documented here because checkpoint resume
// and the experiment scripts rely on reproducing the exact streams.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline uint64_t mix_seed(uint64_t master, std::string_view tag) {
  uint64_t s = master ^ fnv1a(tag);
  splitmix64(s);
  return splitmix64(s);
}

inline uint64_t mix_seed(uint64_t master, std::string_view tag, uint64_t a) {
  uint64_t s = master ^ fnv1a(tag);
  s ^= 0x9E3779B97F4A7C15ULL * (a + 1);
  splitmix64(s);
  return splitmix64(s);
}

inline uint64_t mix_seed(uint64_t master, std::string_view tag, uint64_t a,
                         uint64_t b) {
  uint64_t s = master ^ fnv1a(tag);
  s ^= 0x9E3779B97F4A7C15ULL * (a + 1);
  s ^= 0xC2B2AE3D27D4EB4FULL * (b + 1);
  splitmix64(s);
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Standard normal via Box-Muller; consumes two uniforms per draw (no
  // cached spare, so the state sequence stays easy to reason about).
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    // 1 - u1 keeps the log argument in (0, 1].
    double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform integer in [0, n). Rejection sampling on the top bits.
  uint64_t next_below(uint64_t n) {
    if (n == 0) return 0;
    uint64_t mask = ~0ULL >> __builtin_clzll(n | 1);
    for (;;) {
      uint64_t v = next_u64() & mask;
      if (v < n) return v;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  void fill_normal(std::vector<double>& out, size_t n) {
    out.resize(n);
    for (size_t i = 0; i < n; ++i) out[i] = next_normal();
  }

 private:
  uint64_t state_;
};

}  // namespace fscl
