#pragma once

// Seeded random number generation with bit-stable output.
//
// The raw mt19937_64 stream is specified by the standard, but the
// <random> distributions are not; every transform used here is written
// out explicitly so that a given seed yields the same bytes on every
// platform and standard library.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace polarring {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed, a textual tag and an
// index. Different tags give unrelated streams, so consuming draws in one
// stage never shifts the values seen by another.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag bytes
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = base ^ h;
  std::uint64_t mixed = splitmix64(s);
  s ^= index * 0x9e3779b97f4a7c15ULL;
  mixed ^= splitmix64(s);
  return mixed;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 bits of resolution.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1], keeps the log finite
    double u2 = uniform01();
    double mag = std::sqrt(-2.0 * std::log(u1));
    double ang = 2.0 * pi_ * u2;
    spare_ = mag * std::sin(ang);
    has_spare_ = true;
    return mag * std::cos(ang);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Uniform sample from the closed disk of the given radius.
  std::array<double, 2> in_disk(double radius) {
    double r = radius * std::sqrt(uniform01());
    double phi = 2.0 * pi_ * uniform01();
    return {r * std::cos(phi), r * std::sin(phi)};
  }

  // Unbiased integer in [0, n).
  std::size_t index(std::size_t n) {
    if (n <= 1) return 0;
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  static constexpr double pi_ = 3.14159265358979323846;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace polarring
