#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace oilca::num {

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Counter-based generator: every draw is splitmix64 of an incrementing
// counter, so streams derived from distinct (seed, name, index) triples
// never overlap and replay is exact on the same build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : counter_(seed) {}

  std::uint64_t next_u64() { return splitmix64(counter_++); }

  // Uniform in (0, 1].
  double uniform01() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller, two uniforms per draw (no cached second value, so the
  // stream position is a pure function of the draw count).
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t counter_;
};

// Stable substream derivation (documented in the README): the parent seed
// is hashed with the stream name and an index, then diffused once more.
// Stage streams ("env", "datagen", "vae", "augment", "agent", "eval") and
// per-episode/per-seed streams all come from here.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view name,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(parent ^ fnv1a64(name)) ^
                    (0x9e3779b97f4a7c15ull * (index + 1)));
}

inline Rng substream(std::uint64_t parent, std::string_view name,
                     std::uint64_t index = 0) {
  return Rng(derive_seed(parent, name, index));
}

}  // namespace oilca::num
