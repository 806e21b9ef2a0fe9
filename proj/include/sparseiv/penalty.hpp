#pragma once

#include "sparseiv/core.hpp"
#include "sparseiv/solvers.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace sparseiv {

enum class PenaltyRule { PluginLasso, PluginSqrtLasso, CrossValidation };

const char* to_string(PenaltyRule r) noexcept;

/// A resolved (or to-be-resolved) penalty level with the constants that
/// produced it. gamma <= 0 means "use 1/p".
struct PenaltySpec {
  PenaltyRule rule = PenaltyRule::PluginLasso;
  double c = 1.1;
  double gamma = 0.0;
  long n_sim = 10000;
  double lambda = 0.0;
  double score_quantile = 0.0;  // simulated Lambda or Lambda-tilde behind a plug-in value
  std::optional<double> sigma_v_used;
};

inline double resolve_gamma(double gamma, Index p) { return gamma > 0 ? gamma : 1.0 / static_cast<double>(p); }

/// Simulated (1-gamma)-quantiles, from one shared set of Gaussian draws, of
///   n |E_n[f g]|_inf                       (LASSO score, `lasso`)
///   n |E_n[f g]|_inf / sqrt(E_n[g^2])      (square-root LASSO score, `sqrt_lasso`)
/// Draws come in blocks of 256, block b from substream (rng_seed, b), so the
/// result does not depend on `jobs`.
struct ScoreQuantiles {
  double lasso = 0.0;
  double sqrt_lasso = 0.0;
};

ScoreQuantiles simulate_score_quantiles(const Eigen::MatrixXd& F, double gamma, long n_sim,
                                        std::uint64_t rng_seed, unsigned jobs = 1);

double simulate_score_quantile_lasso(const Eigen::MatrixXd& F, double gamma, long n_sim, std::uint64_t rng_seed);
double simulate_score_quantile_sqrt_lasso(const Eigen::MatrixXd& F, double gamma, long n_sim,
                                          std::uint64_t rng_seed);

/// sqrt(n) * Phi^{-1}(1 - gamma / (2p)): union bound on the LASSO score quantile.
double score_quantile_bound(Index n, Index p, double gamma);
/// sqrt(2 n log(p / gamma)): the cruder closed-form bound.
double score_log_bound(Index n, Index p, double gamma);

PenaltySpec plugin_lambda_lasso(const Eigen::MatrixXd& F, double sigma_v, double c, double gamma, long n_sim,
                                std::uint64_t rng_seed);
/// Same rule from an already simulated quantile.
PenaltySpec plugin_lambda_lasso_from_quantile(double quantile, double sigma_v, double c, double gamma, long n_sim);

/// lambda = c * Lambda-tilde(1 - gamma | F). Reads only F.
PenaltySpec plugin_lambda_sqrt_lasso(const Eigen::MatrixXd& F, double c, double gamma, long n_sim,
                                     std::uint64_t rng_seed);
PenaltySpec plugin_lambda_sqrt_lasso_from_quantile(double quantile, double c, double gamma, long n_sim);

/// Frequency over n_rep Gaussian error draws v ~ N(0, sigma_v^2) with which
/// the penalty dominates c times the scaled score: lambda >= c n |S|_inf,
/// S = 2 E_n[f v] (or the self-normalized score for the square-root rule).
double penalty_dominance_rate(const Eigen::MatrixXd& F, double sigma_v, double c, const PenaltySpec& penalty,
                              long n_rep, std::uint64_t rng_seed);

struct SigmaEstimate {
  double sigma = 0.0;
  int rounds = 0;
  bool converged = false;
  Index selected = 0;  // support size in the final round
};

inline constexpr double kSigmaFloor = 1e-8;

/// Iterated plug-in estimate of the first-stage noise level. Starts from the
/// RMS of y, alternates plug-in LASSO / post-LASSO refits, and inflates the
/// residual RMS by sqrt(n / (n - s)) for the s refitted coefficients.
/// Stops once the relative change drops below 1e-3.
SigmaEstimate estimate_sigma_v(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, double c, double gamma,
                               long n_sim, std::uint64_t rng_seed, int max_rounds = 15);
SigmaEstimate estimate_sigma_v_from_quantile(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, double c,
                                             double score_quantile, int max_rounds = 15,
                                             const SolverOptions& opts = {});

/// Smallest penalty giving the zero solution, for either objective.
double lambda_max(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, Objective objective);

/// `count` log-spaced values from lambda_max down to lambda_max * ratio.
std::vector<double> default_lambda_grid(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, Objective objective,
                                        int count = 100, double ratio = 1e-3);

struct CrossValidationPath {
  PenaltySpec spec;
  std::vector<double> lambdas;  // descending
  std::vector<double> errors;   // pooled out-of-fold MSE, NaN where invalid
  std::vector<char> valid;      // solved on every fold
};

/// Assigns rows to k folds by a seeded permutation, fits the penalized
/// objective on each training fold along the grid (training columns
/// re-normalized, held-out columns scaled with the training scales), and
/// picks the grid value with the smallest pooled out-of-fold squared error.
/// A grid value failing on any fold is excluded. A fold's path stops after
/// the first value whose training fit is saturated (support as large as the
/// fold, or residual sum of squares below kSaturatedFit of the total) or
/// whose solve fails; smaller values are excluded.
inline constexpr double kSaturatedFit = 1e-3;

CrossValidationPath cross_validate_lambda(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, int k_folds,
                                          std::vector<double> lambda_grid, std::uint64_t rng_seed,
                                          Objective objective, const SolverOptions& opts = {});

/// Fold label (0..k-1) of each row.
std::vector<int> assign_folds(Index n, int k_folds, std::uint64_t rng_seed);

}  // namespace sparseiv
