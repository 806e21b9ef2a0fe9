#pragma once

#include "sparseiv/first_stage.hpp"
#include "sparseiv/model.hpp"
#include "sparseiv/penalty.hpp"
#include "sparseiv/solvers.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace sparseiv {

enum class IvStatus { Ok, NoInstrumentsSelected, Failed };

const char* to_string(IvStatus s) noexcept;

/// Which residual enters sigma_eps^2: the structural one y1 - d'alpha, or
/// y1 - A'alpha built from the estimated instruments.
enum class ResidualBasis { Structural, Instrument };

struct IvProvenance {
  std::string estimator;
  std::string first_stage;
  std::optional<PenaltySpec> penalty;
  Index selected = 0;
};

/// Second-stage estimate. alpha = (alpha_1, alpha_2') with alpha_1 the
/// coefficient on y2. cov is the estimated covariance of alpha (already
/// divided by n). alpha, cov, se and Q_hat are empty unless status == Ok.
struct IvEstimate {
  Eigen::VectorXd alpha;
  Eigen::MatrixXd cov;
  Eigen::VectorXd se;
  double sigma_eps_hat = 0.0;
  Eigen::MatrixXd Q_hat;
  IvProvenance method;
  IvStatus status = IvStatus::Failed;
  std::string reason;

  bool ok() const { return status == IvStatus::Ok; }
};

inline constexpr double kMaxCondition = 1e12;

/// Optimal-IV second stage with A_i = (D_hat_i, w_i')':
///   alpha = E_n[A d']^{-1} E_n[A y1],  cov = sigma_eps^2 E_n[A A']^{-1} / n.
IvEstimate fit_optimal_iv(const IvDataset& data, const FirstStageFitd& first_stage,
                          ResidualBasis basis = ResidualBasis::Structural);

/// Same algebra with the instrument column supplied directly.
IvEstimate fit_with_instrument(const IvDataset& data, const Eigen::VectorXd& instrument, std::string estimator,
                               ResidualBasis basis = ResidualBasis::Structural);

/// Infeasible benchmark that uses the true optimal instrument D(x).
IvEstimate fit_infeasible_oracle_iv(const IvDataset& data, const FirstStageTruth& truth);

/// Split-sample (cross-fitted) IV on an explicit partition. Each half is
/// re-normalized, fit with `config`, and receives instruments built from
/// the other half's coefficients; the two estimates are combined with
/// weights sum_i A_i A_i' of each half.
IvEstimate fit_split_sample_iv(const IvDataset& data, const IndexSet& part_a, const IndexSet& part_b,
                               const FirstStageConfig& config, std::uint64_t rng_seed);

/// (W_a + W_b)^{-1} (W_a alpha_a + W_b alpha_b), with W_k = n_k E_{n_k}[A A'].
Eigen::VectorXd combine_split_estimates(const Eigen::MatrixXd& weight_a, const Eigen::VectorXd& alpha_a,
                                        const Eigen::MatrixXd& weight_b, const Eigen::VectorXd& alpha_b);

/// Split-sample IV with a seeded random partition, |a| = ceil(n/2).
IvEstimate fit_split_sample_iv(const IvDataset& data, const FirstStageConfig& config, std::uint64_t rng_seed);

/// Random halves used by the seeded overload, each sorted ascending.
std::pair<IndexSet, IndexSet> random_halves(Index n, std::uint64_t rng_seed);

/// Two-stage least squares using the listed instrument columns plus W.
IvEstimate fit_2sls(const IvDataset& data, const IndexSet& instrument_columns);

/// Fuller k-class estimator with many-instrument (Bekker) standard errors.
IvEstimate fit_fuller(const IvDataset& data, const IndexSet& instrument_columns, double C = 1.0);

struct VarianceEstimate {
  double sigma_eps_hat = 0.0;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd Q_hat;
};

/// sigma_eps^2 = E_n[resid^2] and cov = sigma_eps^2 Q_hat^{-1} / n with
/// Q_hat = E_n[A A']. Throws SingularSystem when Q_hat is ill-conditioned.
VarianceEstimate estimate_variance(const IvDataset& data, const Eigen::MatrixXd& instruments,
                                   const Eigen::VectorXd& alpha, ResidualBasis basis = ResidualBasis::Structural);

struct WaldResult {
  double t_stat = 0.0;
  bool reject = false;
};

/// Two-sided test of alpha_1 = null_value at the given level.
WaldResult wald_test(const IvEstimate& estimate, double null_value, double level = 0.05);

}  // namespace sparseiv
