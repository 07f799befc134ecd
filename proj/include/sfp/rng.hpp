#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sfp/common.hpp"

namespace sfp {

// Counter-mode SplitMix64.  Every random draw in the library comes from one
// of these streams, so any artifact is reproducible from (seed, counter):
//
//   x   = seed + (i + 1) * 0x9e3779b97f4a7c15        (i = counter, from 0)
//   x   = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9
//   x   = (x ^ (x >> 27)) * 0x94d049bb133111eb
//   out =  x ^ (x >> 31)
//
// Known-answer vector (seed = 0, counters 0,1,2):
//   0xe220a8397b1dcdaf  0x6e789e6aa1b965f4  0x06c45d188009454f
// asserted in tests/test_rng.cpp and quoted in the README.
//
// Uniform doubles take the top 53 bits of one output.  Standard normals use
// the Box-Muller cosine half and consume exactly two counter values each.
// Matrices are filled row by row; models fill layers in order and Q,K,V,O
// within a layer.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  static std::uint64_t value_at(std::uint64_t seed, std::uint64_t counter);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() { return value_at(seed_, counter_++); }

  // (0, 1]: never 0, so it can feed a logarithm.
  double next_unit_oc();
  // [0, 1): P(draw < r) is exactly r for r in [0, 1].
  double next_unit_co();
  double next_normal();
  // Uniform in [0, n); rejection sampling, so the counter advance is
  // draw-dependent but still deterministic.  n must be positive.
  std::uint64_t next_below(std::uint64_t n);

  // Seed for a derived stream: output number `tag` of this stream's seed.
  // Used for per-layer maps, corpus cells, anything needing its own stream.
  std::uint64_t derive(std::uint64_t tag) const { return value_at(seed_, tag); }

  // Fisher-Yates, back to front.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // First k entries of a shuffle of {0, ..., n-1}, returned sorted ascending.
  std::vector<int> sample_indices(int n, int k);

  void fill_gaussian(Matrix& m, double scale = 1.0);
  void fill_uniform_symmetric(Matrix& m, double bound);  // U(-bound, bound)

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace sfp
