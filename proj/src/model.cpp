#include "sparseiv/model.hpp"

namespace sparseiv {

Eigen::MatrixXd IvDataset::structural_regressors() const {
  Eigen::MatrixXd d(n(), 1 + k_w());
  d.col(0) = y2;
  if (k_w() > 0) d.rightCols(k_w()) = W;
  return d;
}

IvDataset IvDataset::subset(const IndexSet& rows) const {
  IvDataset out;
  out.y1 = select_rows(y1, rows);
  out.y2 = select_rows(y2, rows);
  out.W = k_w() > 0 ? Eigen::MatrixXd(select_rows(W, rows)) : Eigen::MatrixXd(static_cast<Index>(rows.size()), 0);
  out.F_raw = select_rows(F_raw, rows);
  out.instrument_names = instrument_names;
  out.control_names = control_names;
  return out;
}

IvDataset build_dataset(Eigen::VectorXd y1, Eigen::VectorXd y2, Eigen::MatrixXd W,
                        Eigen::MatrixXd F_raw) {
  const Index n = y1.size();
  if (n < 2) throw Error(ErrorCode::DimensionMismatch, "need at least two observations");
  if (y2.size() != n)
    throw Error(ErrorCode::DimensionMismatch,
                "y2 has " + std::to_string(y2.size()) + " rows, y1 has " + std::to_string(n));
  if (W.size() == 0) W.resize(n, 0);
  if (W.rows() != n)
    throw Error(ErrorCode::DimensionMismatch, "W has " + std::to_string(W.rows()) + " rows, expected " + std::to_string(n));
  if (F_raw.rows() != n)
    throw Error(ErrorCode::DimensionMismatch,
                "F has " + std::to_string(F_raw.rows()) + " rows, expected " + std::to_string(n));
  if (F_raw.cols() < 1) throw Error(ErrorCode::DimensionMismatch, "need at least one instrument");
  for (Index j = 0; j < F_raw.cols(); ++j) {
    if (!(mean_square(F_raw.col(j)) >= kZeroColumnTol))
      throw Error(ErrorCode::ZeroColumn, "instrument column " + std::to_string(j) + " is identically zero");
  }
  if (!y1.allFinite() || !y2.allFinite() || !W.allFinite() || !F_raw.allFinite())
    throw Error(ErrorCode::DataContract, "non-finite value in dataset");

  IvDataset out;
  out.y1 = std::move(y1);
  out.y2 = std::move(y2);
  out.W = std::move(W);
  out.F_raw = std::move(F_raw);
  for (Index j = 0; j < out.p(); ++j) out.instrument_names.push_back("z_" + std::to_string(j + 1));
  for (Index j = 0; j < out.k_w(); ++j) out.control_names.push_back("w_" + std::to_string(j + 1));
  return out;
}

}  // namespace sparseiv
