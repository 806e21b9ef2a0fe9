#pragma once

#include "sparseiv/penalty.hpp"
#include "sparseiv/solvers.hpp"

#include <optional>

namespace sparseiv {

/// How to produce a sparse first stage: which estimator, and whether its
/// penalty comes from the plug-in rule or from k-fold cross-validation.
struct FirstStageConfig {
  SparseMethod method = SparseMethod::PostLasso;
  bool cross_validate = false;
  double c = 1.1;
  double gamma = 0.0;  // <= 0: 1/p
  long n_sim = 10000;
  std::optional<double> sigma_v;  // known noise level; estimated when absent (LASSO plug-in only)
  int sigma_rounds = 15;
  int cv_folds = 10;
  int cv_grid = 100;
  SolverOptions solver;
  unsigned jobs = 1;
};

struct FirstStageResult {
  FirstStageFitd fit;
  PenaltySpec penalty;
};

/// Resolves the penalty and runs the configured estimator on a normalized
/// design. `quantiles` may carry score quantiles already simulated for this F.
FirstStageResult fit_first_stage(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, const FirstStageConfig& config,
                                 std::uint64_t rng_seed,
                                 const std::optional<ScoreQuantiles>& quantiles = std::nullopt);

}  // namespace sparseiv
