#ifndef QBOOST_TYPES_HPP
#define QBOOST_TYPES_HPP

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace qboost {

// Auction matrices are laid out advertisers x impressions: rows index
// advertisers i, columns index impressions j.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: shapes, ranges, unknown identifiers, malformed files.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Missing or unwritable files.
class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

inline void require_shape(const Matrix& m, Index rows, Index cols,
                          const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ValidationError(std::string("shape mismatch: ") + name + " is " +
                          std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ", expected " +
                          std::to_string(rows) + "x" + std::to_string(cols));
  }
}

inline bool all_finite(const Matrix& m) { return m.array().isFinite().all(); }

}  // namespace detail
}  // namespace qboost

#endif  // QBOOST_TYPES_HPP
