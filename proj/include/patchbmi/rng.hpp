#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace patchbmi {

// All randomness flows through these helpers so that a given seed produces the
// same byte stream on every platform. std::mt19937 output is pinned by the
// standard; the distributions in <random> are not, so we avoid them.

// Uniform draw in [0, 1).
inline double uniform01(std::mt19937& rng) {
  return static_cast<double>(rng()) * 0x1p-32;
}

// Uniform draw in [lo, hi).
inline double uniform_range(std::mt19937& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Uniform draw in {0, ..., n-1}. Modulo bias is < 2^-32 * n, irrelevant for
// the shuffle and index use here.
inline std::uint32_t uniform_below(std::mt19937& rng, std::uint32_t n) {
  return rng() % n;
}

// Fisher-Yates, high index down, matching uniform_below above.
template <typename T>
void shuffle_inplace(std::vector<T>& v, std::mt19937& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = uniform_below(rng, static_cast<std::uint32_t>(i));
    std::swap(v[i - 1], v[j]);
  }
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  shuffle_inplace(idx, rng);
  return idx;
}

}  // namespace patchbmi
