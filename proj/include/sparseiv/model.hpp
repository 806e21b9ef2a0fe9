#pragma once

#include "sparseiv/core.hpp"

#include <cmath>
#include <string>

namespace sparseiv {

/// Instrument matrix rescaled to unit empirical mean square per column,
/// together with the scale vector that undoes it: raw.col(j) = scale(j) * F.col(j).
/// Columns are not demeaned.
template <typename Scalar>
struct NormalizedDesign {
  Matrix<Scalar> F;
  Vector<Scalar> scale;

  Index rows() const { return F.rows(); }
  Index cols() const { return F.cols(); }

  /// Recovers the raw matrix.
  Matrix<Scalar> denormalize() const { return F * scale.asDiagonal(); }
};

using NormalizedDesignd = NormalizedDesign<double>;

inline constexpr double kZeroColumnTol = 1e-14;

/// Rescales each column so that E_n[f_j^2] = 1. Throws ZeroColumn when a
/// column's empirical second moment is below 1e-14.
template <typename Derived>
NormalizedDesign<typename Derived::Scalar> normalize_columns(const Eigen::MatrixBase<Derived>& raw) {
  using Scalar = typename Derived::Scalar;
  NormalizedDesign<Scalar> out;
  out.F.resize(raw.rows(), raw.cols());
  out.scale.resize(raw.cols());
  for (Index j = 0; j < raw.cols(); ++j) {
    const Scalar ms = mean_square(raw.col(j));
    if (!(ms >= Scalar(kZeroColumnTol)))
      throw Error(ErrorCode::ZeroColumn, "column " + std::to_string(j) + " has zero second moment");
    const Scalar h = std::sqrt(ms);
    out.scale(j) = h;
    out.F.col(j) = raw.col(j) / h;
  }
  return out;
}

/// Largest deviation of a column mean square from one.
template <typename Derived>
typename Derived::Scalar normalization_error(const Eigen::MatrixBase<Derived>& F) {
  using Scalar = typename Derived::Scalar;
  Scalar worst = 0;
  for (Index j = 0; j < F.cols(); ++j) worst = std::max(worst, std::abs(mean_square(F.col(j)) - Scalar(1)));
  return worst;
}

/// Outcome y1, endogenous regressor y2, exogenous controls W (possibly with
/// zero columns) and the raw technical instruments F_raw. An intercept, if
/// wanted, is a column of ones in W; instruments never receive one.
struct IvDataset {
  Eigen::VectorXd y1;
  Eigen::VectorXd y2;
  Eigen::MatrixXd W;
  Eigen::MatrixXd F_raw;
  std::vector<std::string> instrument_names;
  std::vector<std::string> control_names;

  Index n() const { return y1.size(); }
  Index p() const { return F_raw.cols(); }
  Index k_w() const { return W.cols(); }

  /// Structural regressors d_i = (y2_i, w_i')'.
  Eigen::MatrixXd structural_regressors() const;

  /// Subsample with the listed rows, same column layout.
  IvDataset subset(const IndexSet& rows) const;
};

/// Validates lengths and instrument columns. W may have zero columns but must
/// have n rows (or be completely empty).
IvDataset build_dataset(Eigen::VectorXd y1, Eigen::VectorXd y2, Eigen::MatrixXd W,
                        Eigen::MatrixXd F_raw);

/// Simulation-only ground truth for the first stage:
/// D = F * beta0 + a, with a the approximation error and
/// sqrt(E_n[a^2]) <= c_s. beta0 is expressed in the normalized coordinates.
struct FirstStageTruth {
  Eigen::VectorXd D;
  Eigen::VectorXd beta0;
  Index s = 0;
  double c_s = 0.0;
};

}  // namespace sparseiv
