#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

namespace colosim {

// splitmix64; used for hashing and seed derivation so unrelated streams never share state.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d4a2fa9fb8476dULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

inline std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) h = hash_mix(h, static_cast<unsigned char>(c));
  return h;
}

// Deterministic RNG. Sampling is implemented directly on top of mt19937_64 output
// (no std distributions) so draws depend only on the seed, not the stdlib.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Independent substream for a named purpose under the same root seed.
  static Rng substream(std::uint64_t seed, std::string_view label) {
    return Rng(hash_mix(seed, hash_str(label)));
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Exponential with the given rate (events per unit time). rate must be > 0.
  double exponential(double rate) {
    if (rate <= 0.0) throw std::invalid_argument("exponential rate must be > 0");
    return -std::log1p(-uniform()) / rate;
  }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(eng_() % span);
  }

 private:
  std::mt19937_64 eng_;
};

// Stateless per-key uniform integer in [lo, hi]; used for values that must not
// depend on draw order (e.g. per-request decode gaps shared across policy runs).
inline std::int64_t keyed_uniform_int(std::uint64_t seed, std::uint64_t key_a,
                                      std::uint64_t key_b, std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw std::invalid_argument("keyed_uniform_int: lo > hi");
  const std::uint64_t h = hash_mix(hash_mix(seed, key_a), key_b);
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(h % span);
}

}  // namespace colosim
