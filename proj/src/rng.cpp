#include "rng.hpp"

#include <cmath>

namespace rgia {

namespace {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

DetRng::DetRng(uint64_t seed) {
  uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

uint64_t DetRng::next_u64() {
  const uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double DetRng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double DetRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

uint64_t DetRng::uniform_index(uint64_t n) {
  // Modulo bias is negligible for desk-scale n against a 64-bit stream.
  return n ? next_u64() % n : 0;
}

double DetRng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

double DetRng::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

double DetRng::laplace(double b) {
  const double u = uniform01() - 0.5;
  const double a = std::abs(u);
  // Guard the log argument; u == +-0.5 has probability ~0 but costs nothing.
  const double t = 1.0 - 2.0 * a;
  const double mag = -b * std::log(t > 1e-300 ? t : 1e-300);
  return u < 0 ? -mag : mag;
}

uint64_t DetRng::mix(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
  uint64_t x = seed;
  uint64_t h = splitmix64(x);
  x ^= a + 0x9e3779b97f4a7c15ull;
  h ^= splitmix64(x);
  x ^= b + 0x7f4a7c159e3779b9ull;
  h ^= splitmix64(x);
  x ^= c + 0x2545f4914f6cdd1dull;
  h ^= splitmix64(x);
  return h;
}

}  // namespace rgia
