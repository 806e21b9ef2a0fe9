#pragma once

#include "sparseiv/iv.hpp"
#include "sparseiv/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sparseiv::mc {

enum class PiDesign { CutOff, Exponential };

/// One simulation cell:
///   y_i = alpha d_i + e_i,  d_i = z_i' Pi + v_i,  z_i ~ N(0, Sigma_Z),
///   Sigma_Z(h, j) = sigma_z2 * rho_z^|h-j|,  (e, v) jointly normal with
///   Corr(e, v) = corr_ev and sigma_v^2 calibrated from f_star.
struct McDesign {
  Index n = 500;
  Index p = 100;
  PiDesign design = PiDesign::CutOff;
  double corr_ev = 0.3;
  double f_star = 160.0;
  double sigma_e2 = 1.0;
  double sigma_z2 = 1.0;
  double rho_z = 0.5;
  double alpha_true = 1.0;
  long n_reps = 500;
  std::uint64_t rng_seed = 1;

  void validate() const;
  std::string label() const;
};

const char* to_string(PiDesign d) noexcept;

/// Cut-off: five leading ones then zeros. Exponential: 0.7^(h-1).
Eigen::VectorXd pi_vector(PiDesign design, Index p);

Eigen::MatrixXd toeplitz_covariance(Index p, double rho, double variance = 1.0);

/// sigma_v^2 = n Pi' Sigma_Z Pi / (F* Pi'Pi).
double sigma_v2_from_fstar(const Eigen::VectorXd& pi, const Eigen::MatrixXd& sigma_z, Index n, double f_star);

struct Replication {
  IvDataset data;
  FirstStageTruth truth;
};

/// Draws replications of one design. The Cholesky factor of Sigma_Z is
/// computed once; replication r uses substream (seed, r).
class DesignSampler {
 public:
  explicit DesignSampler(McDesign design);

  const McDesign& design() const { return design_; }
  const Eigen::VectorXd& pi() const { return pi_; }
  double sigma_v() const { return sigma_v_; }

  Replication draw(long rep_index) const;

 private:
  McDesign design_;
  Eigen::VectorXd pi_;
  Eigen::MatrixXd chol_;
  double sigma_v_ = 0.0;
};

Replication gen_replication(const McDesign& design, long rep_index);

enum class Estimator {
  Oracle,
  TslsAll,
  FullerAll,
  IvLasso,
  FullLasso,
  IvSqLasso,
  FullSqLasso,
  IvLassoCv,
  FullLassoCv,
  IvSqLassoCv,
  FullSqLassoCv,
  SplitLasso,
  SplitSqLasso,
};

/// Row label, e.g. "2SLS(100)" or "IV-LASSO".
std::string estimator_label(Estimator e, Index p);
/// Command-line key, e.g. "2sls-all" or "iv-lasso".
std::string estimator_key(Estimator e);
std::optional<Estimator> parse_estimator(const std::string& key);
std::vector<Estimator> full_roster();
/// The benchmark and plug-in/CV rows of the published tables plus the oracle.
std::vector<Estimator> table_roster();

struct McOptions {
  unsigned jobs = 1;
  bool sigma_known = false;  // plug-in LASSO uses the design's sigma_v instead of estimating it
  double c = 1.1;
  long n_sim = 10000;
  int cv_folds = 10;
  int cv_grid = 100;
  double level = 0.05;
  double fuller_C = 1.0;
};

struct MetricRecord {
  double rmse = 0.0;
  double med_bias = 0.0;
  double mad = 0.0;           // median absolute deviation around the median estimate
  double mean_abs_dev = 0.0;  // mean absolute deviation around the mean estimate
  double rp05 = 0.0;
  long n_zero_selected = 0;
  long n_failed = 0;
  long n_used = 0;
};

/// Aggregates estimates (and their standard errors) of a scalar parameter.
MetricRecord mc_metrics(const std::vector<double>& estimates, const std::vector<double>& ses, double alpha_true,
                        double level = 0.05);

struct RepRecord {
  long rep = 0;
  Estimator estimator = Estimator::Oracle;
  IvStatus status = IvStatus::Failed;
  double alpha1 = 0.0;
  double se1 = 0.0;
  Index selected = 0;
  std::string reason;
};

struct McResult {
  McDesign design;
  std::vector<Estimator> estimators;
  std::vector<MetricRecord> metrics;  // parallel to estimators
  std::vector<RepRecord> records;     // rep-major, then estimator order
  double wall_time = 0.0;             // seconds; not part of any file output
};

/// Runs every replication of a cell (in parallel when options.jobs > 1) and
/// aggregates in replication order, so the result does not depend on jobs.
McResult run_cell(const McDesign& design, const std::vector<Estimator>& estimators, const McOptions& options = {});

/// Estimates for one replication, in the order of `estimators`.
std::vector<IvEstimate> estimate_replication(const Replication& rep, const DesignSampler& sampler, long rep_index,
                                             const std::vector<Estimator>& estimators, const McOptions& options);

}  // namespace sparseiv::mc
