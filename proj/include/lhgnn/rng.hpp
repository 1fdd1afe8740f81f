#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace lhgnn {

// Deterministic PRNG used everywhere in the library. xoshiro256** with a
// splitmix64 seeder, so streams are reproducible across platforms and
// compilers (std::uniform_*_distribution is implementation-defined and
// therefore banned here).
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Rejection sampling, unbiased.
  uint64_t uniform_int(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller (both values used in turn).
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    while (u == 0.0) u = uniform();
    const double v = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u));
    spare_ = mag * std::sin(2.0 * M_PI * v);
    have_spare_ = true;
    return mag * std::cos(2.0 * M_PI * v);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a, used for config fingerprints and stream derivation.
inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// All randomness flows from one master seed; subsystem streams are derived
// by stable hashing of (seed, subsystem name, id) so that adding a consumer
// never perturbs the others.
inline Rng derive_stream(uint64_t seed, std::string_view subsystem, uint64_t id = 0) {
  uint64_t h = fnv1a(subsystem);
  h ^= seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  uint64_t x = h;
  const uint64_t a = Rng::splitmix64(x);
  x ^= id * 0xd1342543de82ef95ULL + 1;
  const uint64_t b = Rng::splitmix64(x);
  return Rng(a ^ b);
}

}  // namespace lhgnn
