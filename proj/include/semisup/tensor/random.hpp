#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>
#include <vector>

#include "semisup/tensor/errors.hpp"

namespace semisup {

// Seedable deterministic generator (xoshiro256++ seeded through splitmix64).
// Independent sub-streams are derived from the root key by hashing a consumer
// name and a step index, so toggling one noise consumer never shifts the draws
// of any other. Same seed + same draw sequence gives identical values across
// runs and platforms.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : root_(seed) { reseed(seed); }

  std::uint64_t root_key() const { return root_; }

  // Sub-stream keyed by (root seed, consumer name, index); independent of any
  // draws already made on this source.
  RandomSource substream(std::string_view name, std::uint64_t index = 0) const {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the name
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    std::uint64_t key = splitmix(root_ ^ splitmix(h ^ splitmix(index + 0x9e3779b97f4a7c15ull)));
    return RandomSource(key);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0,1): 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1]; never exactly zero (safe under log).
  double uniform01_open() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Box-Muller pair; both values consumed in order by the fill helpers.
  void gaussian_pair(double sigma, double& z0, double& z1) {
    const double u1 = uniform01_open();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1)) * sigma;
    const double a = 6.283185307179586476925286766559 * u2;
    z0 = r * std::cos(a);
    z1 = r * std::sin(a);
  }

  double gaussian(double sigma) {
    double z0, z1;
    gaussian_pair(sigma, z0, z1);
    return z0;
  }

  // Inclusive uniform integer via rejection (exactly uniform).
  std::int64_t uniform_int(std::int64_t a, std::int64_t b) {
    if (a > b) throw ValueError("uniform_int: a > b");
    const std::uint64_t range = static_cast<std::uint64_t>(b - a) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit span
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return a + static_cast<std::int64_t>(r % range);
  }

  bool bernoulli(double p) {
    if (p < 0.0 || p > 1.0) throw ValueError("bernoulli: p must lie in [0,1]");
    return uniform01() < p;
  }

  // Fisher-Yates with our own integer draws (std::shuffle is not portable
  // across standard library implementations).
  template <typename Vec>
  void shuffle(Vec& v) {
    if (v.empty()) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i)));
      std::swap(v[i], v[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : s_) {
      x = splitmix(x);
      s = x;
    }
    // xoshiro must not start from the all-zero state
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 0x9e3779b97f4a7c15ull;
  }

  std::uint64_t root_;
  std::uint64_t s_[4];
};

}  // namespace semisup
