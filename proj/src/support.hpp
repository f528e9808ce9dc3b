#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgia {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy. ShapeError / ProtocolError / ConfigError are misuse of the
// API or bad inputs; NumericError means the math produced non-finite values.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  int layer_index = -1;
  explicit NumericError(const std::string& msg, int layer = -1)
      : std::runtime_error(msg), layer_index(layer) {}
};

using Vec = std::vector<double>;

struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec data;  // row-major, data.size() == rows*cols

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

bool all_finite(const Vec& v);
void require_finite(const Vec& v, const char* what);

// FNV-1a over raw bytes; used for net fingerprints and config hashes.
uint64_t fnv1a(const void* bytes, size_t n, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t hash_vec(const Vec& v, uint64_t seed = 0xcbf29ce484222325ull);
std::string hash_hex(uint64_t h);

// Shortest round-trip decimal form of a double (to_chars), used everywhere a
// float is written to CSV so that write->parse->write is byte-identical.
std::string format_double(double v);

}  // namespace rgia
