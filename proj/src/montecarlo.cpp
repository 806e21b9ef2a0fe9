#include "sparseiv/montecarlo.hpp"

#include "sparseiv/first_stage.hpp"
#include "sparseiv/rng.hpp"
#include "sparseiv/stats.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace sparseiv::mc {

const char* to_string(PiDesign d) noexcept { return d == PiDesign::CutOff ? "cutoff" : "exponential"; }

void McDesign::validate() const {
  if (n < 4) throw Error(ErrorCode::InvalidArgument, "n must be at least 4");
  if (p < 1) throw Error(ErrorCode::InvalidArgument, "p must be positive");
  if (design == PiDesign::CutOff && p < 5) throw Error(ErrorCode::InvalidArgument, "cut-off design needs p >= 5");
  if (!(std::abs(corr_ev) < 1)) throw Error(ErrorCode::InvalidArgument, "|corr_ev| must be below one");
  if (!(f_star > 0)) throw Error(ErrorCode::InvalidArgument, "f_star must be positive");
  if (!(sigma_e2 >= 0) || !(sigma_z2 > 0)) throw Error(ErrorCode::InvalidArgument, "variances must be positive");
  if (!(std::abs(rho_z) < 1)) throw Error(ErrorCode::InvalidArgument, "|rho_z| must be below one");
  if (n_reps < 1) throw Error(ErrorCode::InvalidArgument, "n_reps must be positive");
}

std::string McDesign::label() const {
  std::ostringstream os;
  os << to_string(design) << "_n" << n << "_p" << p << "_fstar" << f_star << "_corr" << corr_ev;
  return os.str();
}

Eigen::VectorXd pi_vector(PiDesign design, Index p) {
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(p);
  if (design == PiDesign::CutOff) {
    if (p < 5) throw Error(ErrorCode::InvalidArgument, "cut-off design needs p >= 5");
    pi.head(5).setOnes();
  } else {
    double v = 1.0;
    for (Index h = 0; h < p; ++h, v *= 0.7) pi(h) = v;
  }
  return pi;
}

Eigen::MatrixXd toeplitz_covariance(Index p, double rho, double variance) {
  Eigen::MatrixXd s(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) s(i, j) = variance * std::pow(rho, static_cast<double>(std::abs(i - j)));
  return s;
}

double sigma_v2_from_fstar(const Eigen::VectorXd& pi, const Eigen::MatrixXd& sigma_z, Index n, double f_star) {
  const double pp = pi.squaredNorm();
  if (!(pp > 0)) throw Error(ErrorCode::InvalidArgument, "Pi must be non-zero");
  return static_cast<double>(n) * pi.dot(sigma_z * pi) / (f_star * pp);
}

DesignSampler::DesignSampler(McDesign design) : design_(design) {
  design_.validate();
  pi_ = pi_vector(design_.design, design_.p);
  const Eigen::MatrixXd sigma_z = toeplitz_covariance(design_.p, design_.rho_z, design_.sigma_z2);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma_z);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "Sigma_Z is not positive definite");
  chol_ = llt.matrixL();
  sigma_v_ = std::isinf(design_.f_star) ? 0.0 : std::sqrt(sigma_v2_from_fstar(pi_, sigma_z, design_.n, design_.f_star));
}

Replication DesignSampler::draw(long rep_index) const {
  const Index n = design_.n, p = design_.p;
  auto engine = rng::substream(design_.rng_seed, {static_cast<std::uint64_t>(rep_index)});
  Eigen::MatrixXd g(n, p);
  rng::fill_normal(engine, g);
  Eigen::MatrixXd u(n, 2);
  rng::fill_normal(engine, u);

  Replication rep;
  Eigen::MatrixXd Z = g * chol_.transpose();  // rows z_i = L g_i
  const double sigma_e = std::sqrt(design_.sigma_e2);
  const double rho = design_.corr_ev;
  const Eigen::VectorXd e = sigma_e * u.col(0);
  const Eigen::VectorXd v = sigma_v_ * (rho * u.col(0) + std::sqrt(1 - rho * rho) * u.col(1));
  const Eigen::VectorXd D = Z * pi_;
  const Eigen::VectorXd d = D + v;
  const Eigen::VectorXd y = design_.alpha_true * d + e;

  // Truth in normalized coordinates: F = Z H^{-1}, so Z Pi = F (H Pi).
  const Eigen::VectorXd scale = (Z.colwise().squaredNorm().transpose() / static_cast<double>(n)).cwiseSqrt();
  rep.truth.D = D;
  Index s = 0;
  double c_s = 0.0;
  if (design_.design == PiDesign::CutOff) {
    s = 5;
  } else {
    // Smallest leading block whose neglected tail is below sigma_v / sqrt(n).
    const double target = sigma_v_ / std::sqrt(static_cast<double>(n));
    for (s = 0; s <= p; ++s) {
      c_s = s == p ? 0.0 : std::sqrt(mean_square((Z.rightCols(p - s) * pi_.tail(p - s)).eval()));
      if (c_s <= target) break;
    }
  }
  rep.truth.s = s;
  rep.truth.c_s = c_s;
  rep.truth.beta0 = Eigen::VectorXd::Zero(p);
  rep.truth.beta0.head(s) = scale.head(s).cwiseProduct(pi_.head(s));

  rep.data = build_dataset(y, d, Eigen::MatrixXd(n, 0), std::move(Z));
  return rep;
}

Replication gen_replication(const McDesign& design, long rep_index) { return DesignSampler(design).draw(rep_index); }

namespace {

struct EstimatorInfo {
  Estimator id;
  const char* key;
  const char* label;
};

constexpr EstimatorInfo kEstimators[] = {
    {Estimator::Oracle, "oracle", "ORACLE"},
    {Estimator::TslsAll, "2sls-all", "2SLS"},
    {Estimator::FullerAll, "full-all", "FULL"},
    {Estimator::IvLasso, "iv-lasso", "IV-LASSO"},
    {Estimator::FullLasso, "full-lasso", "FULL-LASSO"},
    {Estimator::IvSqLasso, "iv-sqlasso", "IV-SQLASSO"},
    {Estimator::FullSqLasso, "full-sqlasso", "FULL-SQLASSO"},
    {Estimator::IvLassoCv, "iv-lasso-cv", "IV-LASSO-CV"},
    {Estimator::FullLassoCv, "full-lasso-cv", "FULL-LASSO-CV"},
    {Estimator::IvSqLassoCv, "iv-sqlasso-cv", "IV-SQLASSO-CV"},
    {Estimator::FullSqLassoCv, "full-sqlasso-cv", "FULL-SQLASSO-CV"},
    {Estimator::SplitLasso, "split-lasso", "SPLIT-LASSO"},
    {Estimator::SplitSqLasso, "split-sqlasso", "SPLIT-SQLASSO"},
};

const EstimatorInfo& info(Estimator e) {
  for (const auto& i : kEstimators)
    if (i.id == e) return i;
  throw Error(ErrorCode::InvalidArgument, "unknown estimator");
}

enum class Selection { None, Lasso, SqLasso, LassoCv, SqLassoCv };

Selection selection_of(Estimator e) {
  switch (e) {
    case Estimator::IvLasso:
    case Estimator::FullLasso: return Selection::Lasso;
    case Estimator::IvSqLasso:
    case Estimator::FullSqLasso: return Selection::SqLasso;
    case Estimator::IvLassoCv:
    case Estimator::FullLassoCv: return Selection::LassoCv;
    case Estimator::IvSqLassoCv:
    case Estimator::FullSqLassoCv: return Selection::SqLassoCv;
    default: return Selection::None;
  }
}

bool is_fuller(Estimator e) {
  return e == Estimator::FullerAll || e == Estimator::FullLasso || e == Estimator::FullSqLasso ||
         e == Estimator::FullLassoCv || e == Estimator::FullSqLassoCv;
}

}  // namespace

std::string estimator_label(Estimator e, Index p) {
  if (e == Estimator::TslsAll || e == Estimator::FullerAll)
    return std::string(info(e).label) + "(" + std::to_string(p) + ")";
  return info(e).label;
}

std::string estimator_key(Estimator e) { return info(e).key; }

std::optional<Estimator> parse_estimator(const std::string& key) {
  for (const auto& i : kEstimators)
    if (key == i.key) return i.id;
  return std::nullopt;
}

std::vector<Estimator> full_roster() {
  std::vector<Estimator> out;
  for (const auto& i : kEstimators) out.push_back(i.id);
  return out;
}

std::vector<Estimator> table_roster() {
  auto out = full_roster();
  out.erase(std::remove_if(out.begin(), out.end(),
                           [](Estimator e) { return e == Estimator::SplitLasso || e == Estimator::SplitSqLasso; }),
            out.end());
  return out;
}

MetricRecord mc_metrics(const std::vector<double>& estimates, const std::vector<double>& ses, double alpha_true,
                        double level) {
  if (estimates.empty()) throw Error(ErrorCode::InvalidArgument, "mc_metrics needs at least one estimate");
  if (ses.size() != estimates.size()) throw Error(ErrorCode::DimensionMismatch, "one standard error per estimate");
  const auto count = static_cast<double>(estimates.size());
  MetricRecord m;
  double sq = 0.0, total = 0.0;
  std::vector<double> bias;
  bias.reserve(estimates.size());
  for (double a : estimates) {
    sq += (a - alpha_true) * (a - alpha_true);
    total += a;
    bias.push_back(a - alpha_true);
  }
  m.rmse = std::sqrt(sq / count);
  m.med_bias = stats::median(bias);
  const double med = stats::median(estimates);
  const double avg = total / count;
  std::vector<double> dev;
  dev.reserve(estimates.size());
  double abs_total = 0.0;
  for (double a : estimates) {
    dev.push_back(std::abs(a - med));
    abs_total += std::abs(a - avg);
  }
  m.mad = stats::median(dev);
  m.mean_abs_dev = abs_total / count;

  const double crit = stats::normal_quantile(1.0 - level / 2.0);
  long rejections = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double diff = estimates[i] - alpha_true;
    const double t = diff == 0.0 ? 0.0 : diff / ses[i];
    if (std::abs(t) > crit) ++rejections;
  }
  m.rp05 = static_cast<double>(rejections) / count;
  m.n_used = static_cast<long>(estimates.size());
  return m;
}

std::vector<IvEstimate> estimate_replication(const Replication& rep, const DesignSampler& sampler, long rep_index,
                                             const std::vector<Estimator>& estimators, const McOptions& options) {
  const IvDataset& data = rep.data;
  const std::uint64_t seed = sampler.design().rng_seed;
  std::vector<IvEstimate> out(estimators.size());

  std::optional<NormalizedDesignd> design;
  std::optional<ScoreQuantiles> quantiles;
  auto normalized = [&]() -> const NormalizedDesignd& {
    if (!design) design = normalize_columns(data.F_raw);
    return *design;
  };

  FirstStageConfig base;
  base.c = options.c;
  base.n_sim = options.n_sim;
  base.cv_folds = options.cv_folds;
  base.cv_grid = options.cv_grid;
  if (options.sigma_known) base.sigma_v = sampler.sigma_v();

  // One support per selection rule, shared by the 2SLS and Fuller rows.
  struct Selected {
    bool done = false;
    IndexSet support;
    std::string error;
  };
  Selected selected[5];
  auto select = [&](Selection s) -> Selected& {
    auto& slot = selected[static_cast<int>(s)];
    if (slot.done) return slot;
    slot.done = true;
    try {
      const auto& F = normalized().F;
      FirstStageConfig cfg = base;
      cfg.method = (s == Selection::Lasso || s == Selection::LassoCv) ? SparseMethod::PostLasso
                                                                      : SparseMethod::PostSqrtLasso;
      cfg.cross_validate = s == Selection::LassoCv || s == Selection::SqLassoCv;
      if (!cfg.cross_validate && !quantiles) {
        quantiles = simulate_score_quantiles(F, resolve_gamma(cfg.gamma, F.cols()), cfg.n_sim,
                                             rng::derive_seed(seed, {static_cast<std::uint64_t>(rep_index), 1}));
      }
      const auto fs = fit_first_stage(F, data.y2, cfg,
                                      rng::derive_seed(seed, {static_cast<std::uint64_t>(rep_index), 2,
                                                              static_cast<std::uint64_t>(s)}),
                                      cfg.cross_validate ? std::nullopt : quantiles);
      slot.support = fs.fit.coef.support;
    } catch (const Error& err) {
      slot.error = err.what();
    }
    return slot;
  };

  IndexSet all(static_cast<std::size_t>(data.p()));
  for (Index j = 0; j < data.p(); ++j) all[static_cast<std::size_t>(j)] = j;

  for (std::size_t k = 0; k < estimators.size(); ++k) {
    const Estimator e = estimators[k];
    IvEstimate est;
    switch (e) {
      case Estimator::Oracle: est = fit_infeasible_oracle_iv(data, rep.truth); break;
      case Estimator::TslsAll: est = fit_2sls(data, all); break;
      case Estimator::FullerAll: est = fit_fuller(data, all, options.fuller_C); break;
      case Estimator::SplitLasso:
      case Estimator::SplitSqLasso: {
        FirstStageConfig cfg = base;
        cfg.method = e == Estimator::SplitLasso ? SparseMethod::PostLasso : SparseMethod::PostSqrtLasso;
        // The design's sigma_v is for the full sample; halves re-estimate unless it is known.
        est = fit_split_sample_iv(data, cfg, rng::derive_seed(seed, {static_cast<std::uint64_t>(rep_index), 3}));
        break;
      }
      default: {
        const auto& sel = select(selection_of(e));
        if (!sel.error.empty()) {
          est.status = IvStatus::Failed;
          est.reason = "first stage: " + sel.error;
        } else {
          est = is_fuller(e) ? fit_fuller(data, sel.support, options.fuller_C) : fit_2sls(data, sel.support);
        }
      }
    }
    est.method.estimator = estimator_label(e, data.p());
    out[k] = std::move(est);
  }
  return out;
}

McResult run_cell(const McDesign& design, const std::vector<Estimator>& estimators, const McOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const DesignSampler sampler(design);
  const auto reps = static_cast<std::size_t>(design.n_reps);
  std::vector<std::vector<IvEstimate>> results(reps);

  rng::parallel_for(reps, options.jobs, [&](std::size_t r) {
    const auto rep_index = static_cast<long>(r);
    try {
      const Replication rep = sampler.draw(rep_index);
      results[r] = estimate_replication(rep, sampler, rep_index, estimators, options);
    } catch (const std::exception& err) {
      results[r].assign(estimators.size(), IvEstimate{});
      for (auto& e : results[r]) e.reason = err.what();
    }
  });

  McResult out;
  out.design = design;
  out.estimators = estimators;
  for (std::size_t k = 0; k < estimators.size(); ++k) {
    std::vector<double> est, se;
    long zero = 0, failed = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const IvEstimate& e = results[r][k];
      RepRecord rec;
      rec.rep = static_cast<long>(r);
      rec.estimator = estimators[k];
      rec.status = e.status;
      rec.selected = e.method.selected;
      rec.reason = e.reason;
      if (e.ok()) {
        rec.alpha1 = e.alpha(0);
        rec.se1 = e.se(0);
        est.push_back(rec.alpha1);
        se.push_back(rec.se1);
      } else {
        rec.alpha1 = rec.se1 = std::numeric_limits<double>::quiet_NaN();
        (e.status == IvStatus::NoInstrumentsSelected ? zero : failed) += 1;
      }
      out.records.push_back(std::move(rec));
    }
    MetricRecord m;
    if (!est.empty()) {
      m = mc_metrics(est, se, design.alpha_true, options.level);
    } else {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      m.rmse = m.med_bias = m.mad = m.mean_abs_dev = m.rp05 = nan;
    }
    m.n_zero_selected = zero;
    m.n_failed = failed;
    out.metrics.push_back(m);
  }
  // Records are produced estimator-major above; reorder rep-major.
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const RepRecord& a, const RepRecord& b) { return a.rep < b.rep; });
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace sparseiv::mc
