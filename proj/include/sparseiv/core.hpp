#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparseiv {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

/// Ordered (ascending) set of column indices.
using IndexSet = std::vector<Index>;

enum class ErrorCode {
  DimensionMismatch,
  ZeroColumn,
  NotNormalized,
  NonConvergence,
  PerfectFit,
  RankDeficient,
  SingularSystem,
  EigenFailure,
  TooLarge,
  InvalidArgument,
  DataContract,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when an iterative solver exhausts its budget. Carries the best
/// iterate seen so callers can still inspect it.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, Eigen::VectorXd best, double gap)
      : Error(ErrorCode::NonConvergence, what), best_iterate(std::move(best)), kkt_gap(gap) {}

  Eigen::VectorXd best_iterate;
  double kkt_gap;
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroColumn: return "ZeroColumn";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::PerfectFit: return "PerfectFit";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::EigenFailure: return "EigenFailure";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DataContract: return "DataContract";
  }
  return "Unknown";
}

/// Empirical mean E_n[x] of a vector expression.
template <typename Derived>
typename Derived::Scalar mean(const Eigen::MatrixBase<Derived>& x) {
  return x.sum() / static_cast<typename Derived::Scalar>(x.size());
}

/// Empirical mean square E_n[x^2].
template <typename Derived>
typename Derived::Scalar mean_square(const Eigen::MatrixBase<Derived>& x) {
  return x.squaredNorm() / static_cast<typename Derived::Scalar>(x.size());
}

/// Gathers the listed columns of a matrix into a dense copy.
template <typename Derived>
Matrix<typename Derived::Scalar> select_columns(const Eigen::MatrixBase<Derived>& m,
                                                const IndexSet& cols) {
  Matrix<typename Derived::Scalar> out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = m.col(cols[k]);
  return out;
}

/// Gathers the listed rows of a matrix (or vector) into a dense copy.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime>
select_rows(const Eigen::MatrixBase<Derived>& m, const IndexSet& rows) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime> out(
      static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
  return out;
}

}  // namespace sparseiv
