#pragma once

#include <cstdint>

namespace rgia {

// Deterministic RNG with explicitly specified output distributions.
// std::normal_distribution and friends are implementation-defined, which
// would break byte-identical reproducibility guarantees, so all sampling
// is spelled out here (xoshiro256** core, Box-Muller normals, inverse-CDF
// Laplace).
class DetRng {
 public:
  explicit DetRng(uint64_t seed);

  uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform01();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n);
  // Standard normal via Box-Muller (both values used, cached).
  double normal();
  double normal(double mean, double stddev);
  // Laplace(0, b) via inverse CDF.
  double laplace(double b);

  // Derive an independent stream from this seed and a stream id list.
  static uint64_t mix(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0);

 private:
  uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace rgia
