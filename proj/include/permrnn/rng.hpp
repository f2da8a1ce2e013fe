#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace permrnn {

// Deterministic random source. All experiment randomness flows from one
// 64-bit seed through named streams: stream id = hash of a purpose string
// (plus optional indices), so adding a new consumer never perturbs the
// draws of existing ones. Distributions are hand-rolled on top of
// mt19937_64 because the standard <random> distributions are not required
// to produce identical sequences across library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  // Derive an independent stream from (seed, purpose[, a, b]).
  static Rng stream(std::uint64_t seed, std::string_view purpose,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
    return Rng(derive(seed, purpose, a, b));
  }

  static std::uint64_t derive(std::uint64_t seed, std::string_view purpose,
                              std::uint64_t a = 0, std::uint64_t b = 0);

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t uniform_below(std::uint64_t n);

  // Integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform_below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (pair cached).
  double normal();

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Uniformly random permutation of 0..n-1.
  std::vector<int> permutation(int n);

  // Ordered sample of m distinct indices from 0..n-1; the returned order is
  // the sampled order (partial Fisher-Yates).
  std::vector<int> ordered_subset(int n, int m);

 private:
  static std::uint64_t mix(std::uint64_t x);  // splitmix64 finalizer

  std::mt19937_64 engine_;
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace permrnn
