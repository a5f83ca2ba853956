#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

#include "neurossm/common.hpp"

namespace neurossm {

// Deterministic, platform-independent random stream. std distributions are
// not bit-stable across standard libraries, so sampling is done by hand on a
// splitmix64 core. Named sub-streams keep consumers independent: drawing more
// from one stream never shifts another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : root_(seed), state_(mix(seed)) {}

  // Child stream keyed by (this stream's root, name, index).
  Rng derive(std::string_view name, std::uint64_t index = 0) const {
    std::uint64_t key = root_;
    key = mix(key ^ fnv1a(name));
    key = mix(key ^ index);
    return Rng(key);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform on [0, 1) with 53-bit resolution.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer on [0, n). Rejection-free modulo; bias is negligible for
  // the range sizes used here and the draw is fully deterministic.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ContractError("Rng::below: n must be positive");
    return next_u64() % n;
  }

  bool bernoulli(double p) { return next_unit() < p; }

  // Box-Muller, cosine branch only (two u64 draws per sample).
  double normal() {
    double u1 = next_unit();
    double u2 = next_unit();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    if (items.empty()) return;
    for (std::size_t i = items.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(items[i], items[j]);
    }
  }

  std::uint64_t root() const { return root_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  std::uint64_t root_;
  std::uint64_t state_;
};

}  // namespace neurossm
