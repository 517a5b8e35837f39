#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace pgr::rng {

// All stochastic stages draw from mt19937_64 through the helpers below.
// The std::* distributions are implementation-defined, so the mappings
// from raw engine output to values are spelled out here; a stored seed
// reproduces byte-identical streams on any platform.

using Engine = std::mt19937_64;

// splitmix64, used to decorrelate (seed, stream) pairs.
inline uint64_t mix(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Engine make_engine(uint64_t seed, uint64_t stream = 0) {
  return Engine(mix(mix(seed) ^ stream));
}

// Uniform in [0, 1) with 53-bit resolution.
inline double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& eng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(eng);
}

// Inclusive on both ends; rejection sampling keeps it unbiased.
inline int64_t uniform_int(Engine& eng, int64_t lo, int64_t hi) {
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t r;
  do {
    r = eng();
  } while (r >= limit);
  return lo + static_cast<int64_t>(r % span);
}

// Box-Muller; the second variate of each pair is discarded so a draw
// count maps one-to-one onto engine advances.
inline double normal(Engine& eng, double mean = 0.0, double sd = 1.0) {
  double u1 = 0.0;
  do {
    u1 = uniform01(eng);
  } while (u1 <= 0.0);
  double u2 = uniform01(eng);
  double r = std::sqrt(-2.0 * std::log(u1));
  return mean + sd * r * std::cos(2.0 * M_PI * u2);
}

// Fisher-Yates, spelled out so the permutation is engine-defined.
template <typename T>
void shuffle(std::vector<T>& v, Engine& eng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(uniform_int(eng, 0, static_cast<int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace pgr::rng
