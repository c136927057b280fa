#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "hkd/common.hpp"

namespace hkd::io {

// Little-endian binary primitives for the checkpoint container. Doubles are
// written bit-exact so checkpoint resume replays at 64-bit precision.

inline void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw DataError("checkpoint: truncated stream while reading u64");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_i64(std::ostream& os, int64_t v) {
  write_u64(os, static_cast<uint64_t>(v));
}

inline int64_t read_i64(std::istream& is) {
  return static_cast<int64_t>(read_u64(is));
}

inline void write_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

inline double read_f64(std::istream& is) {
  uint64_t bits = read_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  uint64_t n = read_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw DataError("checkpoint: truncated stream while reading string");
  return s;
}

inline void write_mat(std::ostream& os, const Mat& m) {
  write_i64(os, m.rows());
  write_i64(os, m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) write_f64(os, m(i, j));
}

inline Mat read_mat(std::istream& is) {
  int64_t rows = read_i64(is);
  int64_t cols = read_i64(is);
  if (rows < 0 || cols < 0 || rows * cols > (1ll << 32))
    throw DataError("checkpoint: implausible matrix dimensions");
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = read_f64(is);
  return m;
}

}  // namespace hkd::io
