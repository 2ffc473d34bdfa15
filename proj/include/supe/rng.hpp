#pragma once

#include <cstdint>
#include <random>

namespace supe {

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

// Derives an independent stream so components don't share one generator.
inline Rng sub_rng(uint64_t seed, uint64_t stream) {
  std::seed_seq seq{seed, stream ^ uint64_t{0x9e3779b97f4a7c15}};
  return Rng(seq);
}

template <class S = float>
S uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return (S)d(rng);
}

template <class S = float>
S gaussian(Rng& rng, double mean = 0.0, double std = 1.0) {
  std::normal_distribution<double> d(mean, std);
  return (S)d(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  std::uniform_int_distribution<int> d(lo, hi);
  return d(rng);
}

}  // namespace supe
