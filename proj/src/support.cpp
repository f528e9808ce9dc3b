#include "support.hpp"

#include <charconv>
#include <cmath>
#include <cstring>

namespace rgia {

bool all_finite(const Vec& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void require_finite(const Vec& v, const char* what) {
  if (!all_finite(v)) {
    throw NumericError(std::string("non-finite value in ") + what);
  }
}

uint64_t fnv1a(const void* bytes, size_t n, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t hash_vec(const Vec& v, uint64_t seed) {
  return fnv1a(v.data(), v.size() * sizeof(double), seed);
}

std::string hash_hex(uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace rgia
