#include "sfp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sfp {

std::uint64_t CounterRng::value_at(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t x = seed + (counter + 1) * 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double CounterRng::next_unit_oc() {
  // ((top53) + 1) * 2^-53: lands in (0, 1].
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
}

double CounterRng::next_unit_co() {
  return static_cast<double>(next_u64() >> 11) * 0x1p-53;
}

double CounterRng::next_normal() {
  double u1 = next_unit_oc();
  double u2 = next_unit_co();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::next_below(std::uint64_t n) {
  check(n > 0, "next_below: n must be positive");
  if ((n & (n - 1)) == 0) return next_u64() & (n - 1);
  // Reject the incomplete top interval so every residue is equally likely.
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  for (;;) {
    std::uint64_t x = next_u64();
    if (x < limit) return x % n;
  }
}

std::vector<int> CounterRng::sample_indices(int n, int k) {
  check(n >= 0 && k >= 0 && k <= n, "sample_indices: need 0 <= k <= n");
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  shuffle(all);
  std::vector<int> out(all.begin(), all.begin() + k);
  std::sort(out.begin(), out.end());
  return out;
}

void CounterRng::fill_gaussian(Matrix& m, double scale) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = scale * next_normal();
}

void CounterRng::fill_uniform_symmetric(Matrix& m, double bound) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = bound * (2.0 * next_unit_co() - 1.0);
}

}  // namespace sfp
