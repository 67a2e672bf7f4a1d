#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace rewriter {

// Deterministic RNG. mt19937_64 output is fixed by the standard, and all
// mappings below are written out explicitly (std::uniform_int_distribution
// et al. are implementation-defined), so identical seeds give identical
// streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  // [0, n), n >= 1. Lemire multiply-shift; bias is < 2^-64 per call which is
  // irrelevant here, and the mapping is fully reproducible.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  template <typename T>
  const T& choice(const std::vector<T>& items) {
    return items[below(items.size())];
  }

  // Fisher-Yates; std::shuffle's algorithm is unspecified so it is spelled out.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Derive an independent stream for a named phase from the same master seed.
  Rng derive(const std::string& tag) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : tag) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return Rng(splitmix(seed_ ^ h));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace rewriter
