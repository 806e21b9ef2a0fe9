#include "sparseiv/iv.hpp"

#include "sparseiv/rng.hpp"
#include "sparseiv/stats.hpp"

#include <cmath>
#include <numeric>

namespace sparseiv {

const char* to_string(IvStatus s) noexcept {
  switch (s) {
    case IvStatus::Ok: return "ok";
    case IvStatus::NoInstrumentsSelected: return "no-instruments-selected";
    case IvStatus::Failed: return "failed";
  }
  return "unknown";
}

namespace {

IvEstimate failed(std::string estimator, std::string reason) {
  IvEstimate e;
  e.method.estimator = std::move(estimator);
  e.status = IvStatus::Failed;
  e.reason = std::move(reason);
  return e;
}

IvEstimate none_selected(std::string estimator) {
  IvEstimate e;
  e.method.estimator = std::move(estimator);
  e.status = IvStatus::NoInstrumentsSelected;
  e.reason = "no instruments selected";
  return e;
}

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  const double smallest = sv(sv.size() - 1);
  return smallest > 0 ? sv(0) / smallest : INFINITY;
}

/// Solves m x = rhs after a conditioning check.
Eigen::VectorXd guarded_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& rhs, const char* what) {
  if (!m.allFinite() || condition_number(m) > kMaxCondition)
    throw Error(ErrorCode::SingularSystem, std::string(what) + " is singular or ill-conditioned");
  return m.partialPivLu().solve(rhs);
}

Eigen::MatrixXd guarded_inverse(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite() || condition_number(m) > kMaxCondition)
    throw Error(ErrorCode::SingularSystem, std::string(what) + " is singular or ill-conditioned");
  return m.partialPivLu().inverse();
}

Eigen::MatrixXd with_controls(const Eigen::VectorXd& first, const Eigen::MatrixXd& W) {
  Eigen::MatrixXd a(first.size(), 1 + W.cols());
  a.col(0) = first;
  if (W.cols() > 0) a.rightCols(W.cols()) = W;
  return a;
}

Eigen::VectorXd standard_errors(const Eigen::MatrixXd& cov) {
  return cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

/// alpha = (A'd)^{-1} A'y1 for instruments A and structural regressors d.
Eigen::VectorXd iv_coefficients(const Eigen::MatrixXd& A, const Eigen::MatrixXd& d, const Eigen::VectorXd& y1) {
  const double n = static_cast<double>(A.rows());
  const Eigen::MatrixXd Ad = A.transpose() * d / n;
  const Eigen::VectorXd Ay = A.transpose() * y1 / n;
  return guarded_solve(Ad, Ay, "E_n[A d']");
}

Eigen::MatrixXd column_projection_basis(const Eigen::MatrixXd& X, const char* what) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols())
    throw Error(ErrorCode::RankDeficient, std::string(what) + " is rank deficient (rank " +
                                              std::to_string(qr.rank()) + " of " + std::to_string(X.cols()) + ")");
  return qr.householderQ() * Eigen::MatrixXd::Identity(X.rows(), X.cols());
}

}  // namespace

VarianceEstimate estimate_variance(const IvDataset& data, const Eigen::MatrixXd& instruments,
                                   const Eigen::VectorXd& alpha, ResidualBasis basis) {
  const double n = static_cast<double>(data.n());
  const Eigen::MatrixXd regressors = basis == ResidualBasis::Structural ? data.structural_regressors() : instruments;
  const Eigen::VectorXd resid = data.y1 - regressors * alpha;
  VarianceEstimate v;
  const double s2 = mean_square(resid);
  v.sigma_eps_hat = std::sqrt(s2);
  v.Q_hat = instruments.transpose() * instruments / n;
  v.cov = s2 * guarded_inverse(v.Q_hat, "E_n[A A']") / n;
  v.cov = 0.5 * (v.cov + v.cov.transpose());
  return v;
}

IvEstimate fit_with_instrument(const IvDataset& data, const Eigen::VectorXd& instrument, std::string estimator,
                               ResidualBasis basis) {
  if (instrument.size() != data.n())
    throw Error(ErrorCode::DimensionMismatch, "instrument length differs from sample size");
  if (instrument.squaredNorm() == 0.0) return none_selected(std::move(estimator));
  try {
    const Eigen::MatrixXd A = with_controls(instrument, data.W);
    IvEstimate e;
    e.method.estimator = estimator;
    e.alpha = iv_coefficients(A, data.structural_regressors(), data.y1);
    auto v = estimate_variance(data, A, e.alpha, basis);
    e.sigma_eps_hat = v.sigma_eps_hat;
    e.cov = std::move(v.cov);
    e.Q_hat = std::move(v.Q_hat);
    e.se = standard_errors(e.cov);
    e.status = IvStatus::Ok;
    return e;
  } catch (const Error& err) {
    return failed(estimator, err.what());
  }
}

IvEstimate fit_optimal_iv(const IvDataset& data, const FirstStageFitd& first_stage, ResidualBasis basis) {
  if (first_stage.fitted.size() != data.n())
    throw Error(ErrorCode::DimensionMismatch, "first-stage fitted values have the wrong length");
  IvEstimate e = first_stage.empty_support ? none_selected("optimal-iv")
                                           : fit_with_instrument(data, first_stage.fitted, "optimal-iv", basis);
  e.method.first_stage = to_string(first_stage.coef.method);
  e.method.selected = static_cast<Index>(first_stage.coef.support.size());
  return e;
}

IvEstimate fit_infeasible_oracle_iv(const IvDataset& data, const FirstStageTruth& truth) {
  if (truth.D.size() != data.n()) throw Error(ErrorCode::DimensionMismatch, "truth.D has the wrong length");
  IvEstimate e = fit_with_instrument(data, truth.D, "oracle-iv");
  e.method.first_stage = "true-instrument";
  e.method.selected = truth.s;
  return e;
}

IvEstimate fit_2sls(const IvDataset& data, const IndexSet& instrument_columns) {
  const std::string name = "2sls";
  if (instrument_columns.empty()) return none_selected(name);
  const Index L = static_cast<Index>(instrument_columns.size()) + data.k_w();
  if (L > data.n()) return failed(name, "RankDeficient: more instruments than observations");
  Eigen::MatrixXd Z(data.n(), L);
  Z.leftCols(static_cast<Index>(instrument_columns.size())) = select_columns(data.F_raw, instrument_columns);
  if (data.k_w() > 0) Z.rightCols(data.k_w()) = data.W;
  try {
    const Eigen::MatrixXd Qz = column_projection_basis(Z, "first-stage instrument matrix");
    const Eigen::VectorXd projected = Qz * (Qz.transpose() * data.y2);
    IvEstimate e = fit_with_instrument(data, projected, name);
    e.method.first_stage = "ols-projection";
    e.method.selected = static_cast<Index>(instrument_columns.size());
    return e;
  } catch (const Error& err) {
    return failed(name, err.what());
  }
}

IvEstimate fit_fuller(const IvDataset& data, const IndexSet& instrument_columns, double C) {
  const std::string name = "fuller";
  if (instrument_columns.empty()) return none_selected(name);
  const Index n = data.n();
  const Index K = static_cast<Index>(instrument_columns.size());
  const Index L = K + data.k_w();
  if (L >= n) return failed(name, "RankDeficient: Fuller needs fewer instruments than observations");

  try {
    Eigen::MatrixXd Z(n, L);
    Z.leftCols(K) = select_columns(data.F_raw, instrument_columns);
    if (data.k_w() > 0) Z.rightCols(data.k_w()) = data.W;
    const Eigen::MatrixXd Qz = column_projection_basis(Z, "instrument matrix");
    auto project = [&](const Eigen::MatrixXd& v) -> Eigen::MatrixXd { return Qz * (Qz.transpose() * v); };

    // LIML eigenvalue on [y1, y2] with the controls partialled out.
    Eigen::MatrixXd Xbar(n, 2);
    Xbar << data.y1, data.y2;
    if (data.k_w() > 0) {
      const Eigen::MatrixXd Qw = column_projection_basis(data.W, "control matrix");
      Xbar -= Qw * (Qw.transpose() * Xbar);
    }
    const Eigen::MatrixXd PXbar = project(Xbar);
    const Eigen::Matrix2d A = Xbar.transpose() * PXbar;
    const Eigen::Matrix2d B = Xbar.transpose() * (Xbar - PXbar);
    Eigen::LLT<Eigen::Matrix2d> llt(B);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "residual cross-product is not positive definite");
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix2d> ges(A, B);
    if (ges.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "k-class eigenproblem did not converge");
    const double k_liml = ges.eigenvalues().minCoeff();
    const double k = k_liml - C / static_cast<double>(n - L);

    // alpha = (X'PX - k X'MX)^{-1} (X'Py - k X'My), X = [y2, W].
    const Eigen::MatrixXd X = data.structural_regressors();
    const Eigen::MatrixXd PX = project(X);
    const Eigen::VectorXd Py = project(data.y1);
    const Eigen::MatrixXd XPX = X.transpose() * PX;
    const Eigen::MatrixXd XMX = X.transpose() * X - XPX;
    const Eigen::VectorXd XPy = PX.transpose() * data.y1;
    const Eigen::VectorXd XMy = X.transpose() * data.y1 - XPy;
    IvEstimate e;
    e.method.estimator = name;
    e.method.first_stage = "ols-projection";
    e.method.selected = K;
    e.alpha = guarded_solve(XPX - k * XMX, XPy - k * XMy, "Fuller normal equations");

    // Bekker many-instrument variance in the X'X parameterization
    // ell = k / (1 + k):  H = X'PX - ell X'X,
    //   Sigma = s2 [(1-ell)^2 Xt'P Xt + ell^2 Xt'M Xt],  Xt = X - e (e'X)/(e'e),
    // V = H^{-1} Sigma H^{-1}, s2 = e'e / (n - G).
    const Index G = X.cols();
    const Eigen::VectorXd resid = data.y1 - X * e.alpha;
    const double ee = resid.squaredNorm();
    const double s2 = ee / static_cast<double>(n - G);
    const double ell = k / (1.0 + k);
    const Eigen::MatrixXd H = XPX - ell * (X.transpose() * X);
    Eigen::MatrixXd Xt = X;
    if (ee > 0) Xt -= resid * ((resid.transpose() * X) / ee);
    const Eigen::MatrixXd PXt = project(Xt);
    const Eigen::MatrixXd XtPXt = Xt.transpose() * PXt;
    const Eigen::MatrixXd XtMXt = Xt.transpose() * Xt - XtPXt;
    const Eigen::MatrixXd Sigma = s2 * ((1 - ell) * (1 - ell) * XtPXt + ell * ell * XtMXt);
    const Eigen::MatrixXd Hinv = guarded_inverse(H, "Fuller Hessian");
    e.cov = Hinv * Sigma * Hinv.transpose();
    e.cov = 0.5 * (e.cov + e.cov.transpose());
    e.se = standard_errors(e.cov);
    e.sigma_eps_hat = std::sqrt(s2);
    e.Q_hat = XPX / static_cast<double>(n);
    e.status = IvStatus::Ok;
    return e;
  } catch (const Error& err) {
    return failed(name, err.what());
  }
}

std::pair<IndexSet, IndexSet> random_halves(Index n, std::uint64_t rng_seed) {
  IndexSet perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  auto engine = rng::substream(rng_seed, {0x73706c6974});
  for (Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Index> pick(0, i);
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(engine))]);
  }
  const auto n_a = static_cast<std::ptrdiff_t>((n + 1) / 2);
  IndexSet a(perm.begin(), perm.begin() + n_a);
  IndexSet b(perm.begin() + n_a, perm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {std::move(a), std::move(b)};
}

namespace {

struct HalfFit {
  IvDataset data;
  Eigen::VectorXd raw_coef;  // first-stage coefficients on the raw instrument scale
  Index selected = 0;
  IndexSet support;          // in raw column indices
  PenaltySpec penalty;
};

HalfFit fit_half(const IvDataset& data, const IndexSet& rows, const FirstStageConfig& config, std::uint64_t seed) {
  HalfFit h;
  h.data = data.subset(rows);
  IndexSet usable;
  for (Index j = 0; j < data.p(); ++j)
    if (mean_square(h.data.F_raw.col(j)) >= kZeroColumnTol) usable.push_back(j);
  h.raw_coef.setZero(data.p());
  if (usable.empty()) return h;
  const auto design = normalize_columns(select_columns(h.data.F_raw, usable));
  const auto fs = fit_first_stage(design.F, h.data.y2, config, seed);
  h.penalty = fs.penalty;
  for (Index k : fs.fit.coef.support) {
    const Index j = usable[static_cast<std::size_t>(k)];
    h.raw_coef(j) = fs.fit.coef.beta(k) / design.scale(k);
    h.support.push_back(j);
  }
  h.selected = static_cast<Index>(h.support.size());
  return h;
}

}  // namespace

Eigen::VectorXd combine_split_estimates(const Eigen::MatrixXd& weight_a, const Eigen::VectorXd& alpha_a,
                                        const Eigen::MatrixXd& weight_b, const Eigen::VectorXd& alpha_b) {
  return guarded_solve(weight_a + weight_b, weight_a * alpha_a + weight_b * alpha_b, "combined weight matrix");
}

IvEstimate fit_split_sample_iv(const IvDataset& data, const IndexSet& part_a, const IndexSet& part_b,
                               const FirstStageConfig& config, std::uint64_t rng_seed) {
  const std::string name = "split-sample-iv";
  if (data.n() < 4) throw Error(ErrorCode::InvalidArgument, "split-sample IV needs n >= 4");
  if (static_cast<Index>(part_a.size() + part_b.size()) != data.n() || part_a.empty() || part_b.empty())
    throw Error(ErrorCode::InvalidArgument, "partition must cover the sample with two non-empty halves");

  // Both halves draw penalty simulations from the same stream, so the fit of
  // a half depends only on its rows and not on its label.
  const std::uint64_t pen_seed = rng::derive_seed(rng_seed, {0x70656e});
  HalfFit a, b;
  try {
    a = fit_half(data, part_a, config, pen_seed);
  } catch (const Error& err) {
    return failed(name, std::string("half a first stage: ") + err.what());
  }
  try {
    b = fit_half(data, part_b, config, pen_seed);
  } catch (const Error& err) {
    return failed(name, std::string("half b first stage: ") + err.what());
  }

  IvEstimate e;
  e.method.estimator = name;
  e.method.first_stage = to_string(config.method);
  e.method.penalty = a.penalty;
  IndexSet both = a.support;
  both.insert(both.end(), b.support.begin(), b.support.end());
  std::sort(both.begin(), both.end());
  both.erase(std::unique(both.begin(), both.end()), both.end());
  e.method.selected = static_cast<Index>(both.size());

  if (a.selected == 0 && b.selected == 0) {
    e.status = IvStatus::NoInstrumentsSelected;
    e.reason = "neither half selected instruments";
    return e;
  }
  if (b.selected == 0) {
    e.status = IvStatus::Failed;
    e.reason = "half a: no instruments (half b selected none)";
    return e;
  }
  if (a.selected == 0) {
    e.status = IvStatus::Failed;
    e.reason = "half b: no instruments (half a selected none)";
    return e;
  }

  // Cross-fitted instruments: f^a' H_a H_b^{-1} beta^b = f_raw^a' (beta^b / h^b).
  const Eigen::MatrixXd A_a = with_controls(a.data.F_raw * b.raw_coef, a.data.W);
  const Eigen::MatrixXd A_b = with_controls(b.data.F_raw * a.raw_coef, b.data.W);
  Eigen::VectorXd alpha_a, alpha_b;
  try {
    alpha_a = iv_coefficients(A_a, a.data.structural_regressors(), a.data.y1);
  } catch (const Error& err) {
    e.status = IvStatus::Failed;
    e.reason = std::string("half a: ") + err.what();
    return e;
  }
  try {
    alpha_b = iv_coefficients(A_b, b.data.structural_regressors(), b.data.y1);
  } catch (const Error& err) {
    e.status = IvStatus::Failed;
    e.reason = std::string("half b: ") + err.what();
    return e;
  }

  const Eigen::MatrixXd S_a = A_a.transpose() * A_a;  // n_a E_{n_a}[A A']
  const Eigen::MatrixXd S_b = A_b.transpose() * A_b;
  const Eigen::MatrixXd S = S_a + S_b;
  try {
    e.alpha = combine_split_estimates(S_a, alpha_a, S_b, alpha_b);
    const Eigen::VectorXd resid = data.y1 - data.structural_regressors() * e.alpha;
    const double s2 = mean_square(resid);
    e.sigma_eps_hat = std::sqrt(s2);
    e.Q_hat = S / static_cast<double>(data.n());
    e.cov = s2 * guarded_inverse(S, "combined weight matrix");
    e.cov = 0.5 * (e.cov + e.cov.transpose());
    e.se = standard_errors(e.cov);
    e.status = IvStatus::Ok;
  } catch (const Error& err) {
    e.alpha.resize(0);
    e.status = IvStatus::Failed;
    e.reason = err.what();
  }
  return e;
}

IvEstimate fit_split_sample_iv(const IvDataset& data, const FirstStageConfig& config, std::uint64_t rng_seed) {
  const auto [a, b] = random_halves(data.n(), rng_seed);
  return fit_split_sample_iv(data, a, b, config, rng_seed);
}

WaldResult wald_test(const IvEstimate& estimate, double null_value, double level) {
  if (!estimate.ok()) throw Error(ErrorCode::InvalidArgument, "Wald test on an estimate without status Ok");
  WaldResult w;
  const double diff = estimate.alpha(0) - null_value;
  const double se = estimate.se(0);
  w.t_stat = diff == 0.0 ? 0.0 : diff / se;
  w.reject = std::abs(w.t_stat) > stats::normal_quantile(1.0 - level / 2.0);
  return w;
}

}  // namespace sparseiv
