#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hiro {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Raised when a computation produces or would consume NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an operation is called in a state that violates its contract.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Vector clip(const Vector& x, const Vector& lo, const Vector& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

inline Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// Little-endian binary primitives shared by the snapshot and checkpoint formats.
namespace binio {

inline void write_u64(std::ostream& os, std::uint64_t value) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xffU);
  os.write(bytes, 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8)) throw FormatError("unexpected end of stream");
  std::uint64_t value = 0;
  for (int i = 7; i >= 0; --i) value = (value << 8) | bytes[i];
  return value;
}

inline void write_f64(std::ostream& os, double value) { write_u64(os, std::bit_cast<std::uint64_t>(value)); }

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    throw FormatError("bad magic, expected " + std::string(magic));
  }
}

inline void write_matrix(std::ostream& os, const Matrix& m) {
  write_u64(os, static_cast<std::uint64_t>(m.rows()));
  write_u64(os, static_cast<std::uint64_t>(m.cols()));
  // row-major on disk
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_f64(os, m(r, c));
}

inline Matrix read_matrix(std::istream& is) {
  const auto rows = static_cast<Eigen::Index>(read_u64(is));
  const auto cols = static_cast<Eigen::Index>(read_u64(is));
  if (rows > (1 << 24) || cols > (1 << 24)) throw FormatError("matrix dimensions out of range");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = read_f64(is);
  return m;
}

inline void write_vector(std::ostream& os, const Vector& v) {
  write_u64(os, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(os, v[i]);
}

inline Vector read_vector(std::istream& is) {
  const auto n = static_cast<Eigen::Index>(read_u64(is));
  if (n > (1 << 26)) throw FormatError("vector length out of range");
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = read_f64(is);
  return v;
}

}  // namespace binio
}  // namespace hiro
