#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace hkd {

// Batches are sample-major: row i is instance i. Row-major storage keeps
// each instance contiguous for the image kernels.
using Mat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// Error hierarchy. The C API and the CLI map these onto status/exit codes:
// config -> 1, data/io -> 2, numerical -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

// Row-wise L2 normalization. Rows with norm below `eps` are left untouched;
// callers that care can detect them via has_zero_rows.
inline Mat normalize_rows(const Mat& m, double eps = 1e-12) {
  Mat out = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double n = m.row(i).norm();
    if (n >= eps) out.row(i) /= n;
  }
  return out;
}

inline bool has_zero_rows(const Mat& m, double eps = 1e-12) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (m.row(i).norm() < eps) return true;
  return false;
}

}  // namespace hkd
