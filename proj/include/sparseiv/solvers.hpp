#pragma once

#include "sparseiv/core.hpp"
#include "sparseiv/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sparseiv {

enum class SparseMethod { Lasso, SqrtLasso, PostLasso, PostSqrtLasso };
enum class Objective { Lasso, SqrtLasso };

const char* to_string(SparseMethod m) noexcept;

inline bool is_post(SparseMethod m) { return m == SparseMethod::PostLasso || m == SparseMethod::PostSqrtLasso; }
inline Objective objective_of(SparseMethod m) {
  return (m == SparseMethod::Lasso || m == SparseMethod::PostLasso) ? Objective::Lasso : Objective::SqrtLasso;
}

template <typename Scalar>
struct SparseCoef {
  Vector<Scalar> beta;
  IndexSet support;  // {j : beta_j != 0}, ascending
  SparseMethod method = SparseMethod::Lasso;
};

template <typename Scalar>
struct FirstStageFit {
  SparseCoef<Scalar> coef;
  Vector<Scalar> fitted;  // F * coef.beta
  Scalar lambda = 0;
  Scalar residual_rms = 0;
  Scalar kkt_gap = 0;
  bool empty_support = false;
  long iterations = 0;
};

using FirstStageFitd = FirstStageFit<double>;

struct SolverOptions {
  double tol = 1e-7;
  long max_iter = 100000;  // coordinate sweeps
};

inline constexpr double kNormalizationTol = 1e-8;
inline constexpr double kPerfectFitTol = 1e-14;
// Active-set sweeps between full sweeps; bounds how long a stale support is polished.
inline constexpr long kPolishSweeps = 200;

template <typename Derived>
IndexSet support_of(const Eigen::MatrixBase<Derived>& beta) {
  IndexSet s;
  for (Index j = 0; j < beta.size(); ++j)
    if (beta(j) != 0) s.push_back(j);
  return s;
}

namespace detail {

template <typename Scalar>
Scalar soft_threshold(Scalar z, Scalar t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return Scalar(0);
}

/// Max violation of the LASSO stationarity conditions given the scaled
/// correlation grad = E_n[f_j r] and the penalty slope lambda/n.
template <typename Scalar>
Scalar lasso_gap(const Vector<Scalar>& grad, const Vector<Scalar>& beta, Scalar slope) {
  Scalar gap = 0;
  for (Index j = 0; j < beta.size(); ++j) {
    const Scalar g2 = 2 * grad(j);
    const Scalar v = beta(j) != 0 ? std::abs(g2 - slope * (beta(j) > 0 ? 1 : -1))
                                  : std::max(Scalar(0), std::abs(g2) - slope);
    gap = std::max(gap, v);
  }
  return gap;
}

template <typename Scalar>
Scalar sqrt_lasso_gap(const Vector<Scalar>& grad, const Vector<Scalar>& beta, Scalar rms, Scalar slope) {
  Scalar gap = 0;
  for (Index j = 0; j < beta.size(); ++j) {
    const Scalar g = grad(j) / rms;
    const Scalar v = beta(j) != 0 ? std::abs(g - slope * (beta(j) > 0 ? 1 : -1))
                                  : std::max(Scalar(0), std::abs(g) - slope);
    gap = std::max(gap, v);
  }
  return gap;
}

template <typename Scalar>
void check_normalized(const Eigen::Ref<const Matrix<Scalar>>& F) {
  for (Index j = 0; j < F.cols(); ++j) {
    if (std::abs(mean_square(F.col(j)) - Scalar(1)) > Scalar(kNormalizationTol))
      throw Error(ErrorCode::NotNormalized, "column " + std::to_string(j) + " does not have unit mean square");
  }
}

}  // namespace detail

/// Cyclic coordinate descent with covariance updates for
///   LASSO:             min_b E_n[(y - F b)^2] + (lambda/n) |b|_1        (solve)
///   square-root LASSO: min_b sqrt(E_n[(y - F b)^2]) + (lambda/n) |b|_1  (solve_sqrt)
/// Gram columns are computed on first use, so the cost scales with the
/// number of variables that ever become active. The state persists between
/// calls, giving warm starts along a sequence of penalties.
template <typename Scalar>
class CoordinateDescent {
 public:
  CoordinateDescent(const Eigen::Ref<const Matrix<Scalar>>& F, const Eigen::Ref<const Vector<Scalar>>& y)
      : F_(F), y_(y), n_(static_cast<Scalar>(F.rows())) {
    if (y.size() != F.rows()) throw Error(ErrorCode::DimensionMismatch, "y length differs from F rows");
    const Index p = F.cols();
    beta_.setZero(p);
    grad_ = F.transpose() * y / n_;
    diag_ = F.colwise().squaredNorm().transpose() / n_;
    slot_.assign(static_cast<std::size_t>(p), -1);
  }

  const Vector<Scalar>& beta() const { return beta_; }
  const Vector<Scalar>& grad() const { return grad_; }
  long sweeps() const { return sweeps_; }

  /// Recomputes E_n[f_j r] (and the residual) from scratch to flush accumulated rounding.
  void refresh_gradient() {
    resid_ = y_ - F_ * beta_;
    grad_.noalias() = F_.transpose() * resid_ / n_;
    q_ = resid_.squaredNorm() / n_;
  }

  Scalar gap(Scalar lambda) const { return detail::lasso_gap<Scalar>(grad_, beta_, lambda / n_); }

  /// Runs to LASSO KKT gap <= tol at the given penalty. Returns the gap.
  Scalar solve(Scalar lambda, Scalar tol, long max_sweeps) {
    const Scalar thresh = lambda / (2 * n_);
    sqrt_mode_ = false;
    auto up = [&](Index j) { return update(j, thresh); };
    auto full_gap = [&] { return gap(lambda); };
    auto part_gap = [&] { return active_gap(lambda); };
    return run(up, full_gap, part_gap, tol, max_sweeps, [](bool) {}, [&] { return support_solve(lambda, tol); });
  }

  /// Runs to square-root LASSO KKT gap <= tol. Throws PerfectFit once the
  /// residual vanishes or the current support certifiably interpolates y.
  Scalar solve_sqrt(Scalar lambda, Scalar tol, long max_sweeps) {
    const Scalar mu = lambda / n_;
    if (!sqrt_mode_) {
      refresh_gradient();
      sqrt_mode_ = true;
    }
    check_perfect_fit();
    auto up = [&](Index j) { return update_sqrt(j, mu); };
    auto full_gap = [&] { return detail::sqrt_lasso_gap<Scalar>(grad_, beta_, std::sqrt(q_), mu); };
    auto part_gap = [&] { return active_gap_sqrt(mu); };
    auto after_sweep = [&](bool full) {
      // The running residual drifts by rounding; decide perfect fit on an exact one.
      if (q_ < Scalar(1e4) * Scalar(kPerfectFitTol)) refresh_gradient();
      check_perfect_fit();
      if (full && interpolates(mu))
        throw Error(ErrorCode::PerfectFit,
                    "square-root LASSO solution interpolates the response; KKT certificate undefined");
    };
    return run(up, full_gap, part_gap, tol, max_sweeps, after_sweep, [&] { return support_solve_sqrt(mu, tol); });
  }

 private:
  template <typename Update, typename FullGap, typename PartGap, typename AfterSweep, typename SupportSolve>
  Scalar run(Update&& up, FullGap&& full_gap, PartGap&& part_gap, Scalar tol, long max_sweeps,
             AfterSweep&& after_sweep, SupportSolve&& support_solve) {
    const long budget = sweeps_ + max_sweeps;
    tried_support_.clear();
    for (;;) {
      for (Index j = 0; j < beta_.size(); ++j) up(j);
      ++sweeps_;
      after_sweep(true);
      if (full_gap() <= tol) {
        refresh_gradient();
        const Scalar g = full_gap();
        if (g <= tol) return g;
      }
      // Polish the active set before paying for another full sweep.
      active_.clear();
      for (Index j = 0; j < beta_.size(); ++j)
        if (beta_(j) != 0) active_.push_back(j);
      bool stalled = true;
      for (long inner = 0; inner < kPolishSweeps && sweeps_ < budget; ++inner) {
        Scalar change = 0;
        for (Index j : active_) change = std::max(change, up(j));
        ++sweeps_;
        after_sweep(false);
        if (change <= tol * Scalar(0.1) || part_gap() <= tol * Scalar(0.5)) {
          stalled = false;
          break;
        }
      }
      // Slow progress on a fixed support: try the closed form there.
      if (stalled && support_solve()) return full_gap();
      if (sweeps_ >= budget) {
        refresh_gradient();
        const Scalar g = full_gap();
        if (g <= tol) return g;
        throw NonConvergenceError("coordinate descent exhausted " + std::to_string(max_sweeps) + " sweeps",
                                  beta_.template cast<double>(), static_cast<double>(g));
      }
    }
  }

  const Vector<Scalar>& gram_col(Index j) {
    auto& s = slot_[static_cast<std::size_t>(j)];
    if (s < 0) {
      s = static_cast<Index>(gram_.size());
      gram_.push_back(F_.transpose() * F_.col(j) / n_);
    }
    return gram_[static_cast<std::size_t>(s)];
  }

  Scalar update(Index j, Scalar thresh) {
    const Scalar old = beta_(j);
    const Scalar z = grad_(j) + diag_(j) * old;
    const Scalar b = detail::soft_threshold(z, thresh) / diag_(j);
    const Scalar delta = b - old;
    if (delta != 0) {
      grad_.noalias() -= gram_col(j) * delta;
      beta_(j) = b;
    }
    return std::abs(delta) * std::sqrt(diag_(j));
  }

  // Exact minimizer of sqrt(d (b - z/d)^2 + t^2) + mu |b| over coordinate j,
  // where z = E_n[f_j r_{-j}] and t^2 = E_n[r_{-j}^2] - z^2/d.
  Scalar update_sqrt(Index j, Scalar mu) {
    const Scalar old = beta_(j);
    const Scalar d = diag_(j);
    const Scalar z = grad_(j) + d * old;
    const Scalar q0 = std::max(Scalar(0), q_ + 2 * old * grad_(j) + d * old * old);
    Scalar b = 0;
    if (std::abs(z) > mu * std::sqrt(q0)) {
      const Scalar t2 = std::max(Scalar(0), q0 - z * z / d);
      const Scalar shrink = mu * std::sqrt(t2 / (d * (d - mu * mu)));
      b = (z > 0 ? 1 : -1) * std::max(Scalar(0), std::abs(z) / d - shrink);
    }
    const Scalar delta = b - old;
    if (delta != 0) {
      grad_.noalias() -= gram_col(j) * delta;
      q_ = std::max(Scalar(0), q0 - 2 * b * z + d * b * b);
      beta_(j) = b;
    }
    return std::abs(delta) * std::sqrt(d);
  }

  Scalar active_gap(Scalar lambda) const {
    Scalar gap = 0;
    const Scalar slope = lambda / n_;
    for (Index j : active_) {
      const Scalar g2 = 2 * grad_(j);
      gap = std::max(gap, beta_(j) != 0 ? std::abs(g2 - slope * (beta_(j) > 0 ? 1 : -1))
                                        : std::max(Scalar(0), std::abs(g2) - slope));
    }
    return gap;
  }

  Scalar active_gap_sqrt(Scalar mu) const {
    Scalar gap = 0;
    const Scalar rms = std::sqrt(q_);
    for (Index j : active_) {
      const Scalar g = grad_(j) / rms;
      gap = std::max(gap, beta_(j) != 0 ? std::abs(g - mu * (beta_(j) > 0 ? 1 : -1))
                                        : std::max(Scalar(0), std::abs(g) - mu));
    }
    return gap;
  }

  // Current support and signs, or false when empty, wider than n, or already
  // tried at this penalty.
  bool fresh_support(IndexSet& S, Vector<Scalar>& sign) {
    for (Index j = 0; j < beta_.size(); ++j)
      if (beta_(j) != 0) S.push_back(j);
    const auto k = static_cast<Index>(S.size());
    if (k == 0 || k > F_.rows()) return false;
    sign.resize(k);
    for (Index c = 0; c < k; ++c) sign(c) = beta_(S[static_cast<std::size_t>(c)]) > 0 ? 1 : -1;
    if (S == tried_support_ && sign == tried_sign_) return false;
    tried_support_ = S;
    tried_sign_ = sign;
    return true;
  }

  Matrix<Scalar> support_columns(const IndexSet& S) const {
    Matrix<Scalar> FS(F_.rows(), static_cast<Index>(S.size()));
    for (Index c = 0; c < FS.cols(); ++c) FS.col(c) = F_.col(S[static_cast<std::size_t>(c)]);
    return FS;
  }

  // Installs beta if its signs match and its full KKT gap is within tol.
  template <typename Gap>
  bool accept(const IndexSet& S, const Vector<Scalar>& sign, const Vector<Scalar>& bS, Scalar tol, Gap&& gap_of) {
    for (Index c = 0; c < bS.size(); ++c)
      if (bS(c) * sign(c) <= 0) return false;
    Vector<Scalar> beta = Vector<Scalar>::Zero(beta_.size());
    for (Index c = 0; c < bS.size(); ++c) beta(S[static_cast<std::size_t>(c)]) = bS(c);
    const Vector<Scalar> resid = y_ - F_ * beta;
    Vector<Scalar> grad = F_.transpose() * resid / n_;
    const Scalar q = resid.squaredNorm() / n_;
    if (gap_of(grad, beta, q) > tol) return false;
    beta_ = beta;
    grad_ = std::move(grad);
    q_ = q;
    return true;
  }

  // With the support S and signs s fixed, the LASSO conditions
  // 2 E_n[f_S r] = (lambda/n) s give G b_S = E_n[f_S y] - lambda/(2n) s.
  bool support_solve(Scalar lambda, Scalar tol) {
    IndexSet S;
    Vector<Scalar> sign;
    if (!fresh_support(S, sign)) return false;
    const Matrix<Scalar> FS = support_columns(S);
    const Eigen::LDLT<Matrix<Scalar>> G(FS.transpose() * FS / n_);
    if (G.info() != Eigen::Success || !(G.vectorD().minCoeff() > 0)) return false;
    const Vector<Scalar> bS = G.solve(FS.transpose() * y_ / n_ - lambda / (2 * n_) * sign);
    return accept(S, sign, bS, tol, [&](const Vector<Scalar>& g, const Vector<Scalar>& b, Scalar) {
      return detail::lasso_gap<Scalar>(g, b, lambda / n_);
    });
  }

  // With the support S and signs s fixed, the square-root LASSO conditions
  // E_n[f_S r] = mu sqrt(q) s have the closed form
  //   q = q_ls / (1 - mu^2 s'G^{-1}s),  b_S = b_ls - mu sqrt(q) G^{-1}s,
  // with G = E_n[f_S f_S'] and (b_ls, q_ls) the least-squares fit on S.
  // Near the interpolation boundary coordinate descent converges slowly and
  // this step finishes the job.
  bool support_solve_sqrt(Scalar mu, Scalar tol) {
    IndexSet S;
    Vector<Scalar> sign;
    if (!fresh_support(S, sign)) return false;
    const auto k = static_cast<Index>(S.size());
    const Matrix<Scalar> FS = support_columns(S);
    Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(FS);
    if (qr.rank() < k) return false;
    const Vector<Scalar> b_ls = qr.solve(y_);
    const Scalar q_ls = (y_ - FS * b_ls).squaredNorm() / n_;
    const Matrix<Scalar> G = FS.transpose() * FS / n_;
    const Vector<Scalar> Ginv_s = G.ldlt().solve(sign);
    const Scalar denom = 1 - mu * mu * sign.dot(Ginv_s);
    if (!(denom > 0) || !(q_ls > Scalar(kPerfectFitTol))) return false;
    const Vector<Scalar> bS = b_ls - mu * std::sqrt(q_ls / denom) * Ginv_s;
    return accept(S, sign, bS, tol, [&](const Vector<Scalar>& g, const Vector<Scalar>& b, Scalar q) {
      return detail::sqrt_lasso_gap<Scalar>(g, b, std::sqrt(q), mu);
    });
  }

  void check_perfect_fit() const {
    if (q_ < Scalar(kPerfectFitTol))
      throw Error(ErrorCode::PerfectFit, "square-root LASSO residual is zero; KKT certificate undefined");
  }

  // Interpolation is optimal when y = F_S b_S with sign(b_S) = s and some u
  // with |u|_2 <= 1 has F'u / sqrt(n) in mu * (subdifferential of |b|_1).
  // The minimum-norm u on the current support is tested; success certifies
  // that every minimizer has zero residual.
  bool interpolates(Scalar mu) const {
    IndexSet S;
    for (Index j = 0; j < beta_.size(); ++j)
      if (beta_(j) != 0) S.push_back(j);
    const auto k = static_cast<Index>(S.size());
    if (k == 0 || k > F_.rows()) return false;
    // Only worth testing once the residual is small relative to y.
    if (q_ > Scalar(1e-4) * y_.squaredNorm() / n_) return false;
    Matrix<Scalar> FS(F_.rows(), k);
    Vector<Scalar> sign(k);
    for (Index c = 0; c < k; ++c) {
      FS.col(c) = F_.col(S[static_cast<std::size_t>(c)]);
      sign(c) = beta_(S[static_cast<std::size_t>(c)]) > 0 ? 1 : -1;
    }
    Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(FS);
    if (qr.rank() < k) return false;
    const Vector<Scalar> bS = qr.solve(y_);
    if ((y_ - FS * bS).squaredNorm() / n_ >= Scalar(kPerfectFitTol)) return false;
    for (Index c = 0; c < k; ++c)
      if (bS(c) * sign(c) <= 0) return false;
    // u = sqrt(n) mu F_S (F_S'F_S)^{-1} s
    const Matrix<Scalar> gram = FS.transpose() * FS;
    const Vector<Scalar> w = gram.ldlt().solve(sign);
    const Vector<Scalar> u = std::sqrt(n_) * mu * (FS * w);
    if (u.norm() > 1) return false;
    const Vector<Scalar> corr = F_.transpose() * u / std::sqrt(n_);
    return corr.template lpNorm<Eigen::Infinity>() <= mu * (1 + Scalar(1e-9));
  }

  Eigen::Ref<const Matrix<Scalar>> F_;
  Eigen::Ref<const Vector<Scalar>> y_;
  Scalar n_;
  Vector<Scalar> beta_;
  Vector<Scalar> grad_;
  Vector<Scalar> diag_;
  Vector<Scalar> resid_;
  Scalar q_ = 0;
  bool sqrt_mode_ = false;
  std::vector<Index> slot_;
  std::vector<Vector<Scalar>> gram_;
  IndexSet active_;
  IndexSet tried_support_;
  Vector<Scalar> tried_sign_;
  long sweeps_ = 0;
};

/// Max violation of the optimality conditions of the LASSO or square-root
/// LASSO objective at beta. Zero means beta is an exact minimizer.
template <typename DF, typename DY, typename DB>
typename DF::Scalar kkt_check(const Eigen::MatrixBase<DF>& F, const Eigen::MatrixBase<DY>& y,
                              const Eigen::MatrixBase<DB>& beta, typename DF::Scalar lambda,
                              Objective objective) {
  using Scalar = typename DF::Scalar;
  if (y.size() != F.rows() || beta.size() != F.cols())
    throw Error(ErrorCode::DimensionMismatch, "kkt_check: inconsistent dimensions");
  const Scalar n = static_cast<Scalar>(F.rows());
  const Vector<Scalar> r = y - F * beta;
  const Vector<Scalar> grad = F.transpose() * r / n;
  const Vector<Scalar> b = beta;
  if (objective == Objective::Lasso) return detail::lasso_gap<Scalar>(grad, b, lambda / n);
  const Scalar q = mean_square(r);
  if (q < Scalar(kPerfectFitTol)) throw Error(ErrorCode::PerfectFit, "square-root LASSO residual is zero");
  return detail::sqrt_lasso_gap<Scalar>(grad, b, std::sqrt(q), lambda / n);
}

/// Objective value E_n[(y-Fb)^2] + (lambda/n)|b|_1, or its square-root variant.
template <typename DF, typename DY, typename DB>
typename DF::Scalar objective_value(const Eigen::MatrixBase<DF>& F, const Eigen::MatrixBase<DY>& y,
                                    const Eigen::MatrixBase<DB>& beta, typename DF::Scalar lambda,
                                    Objective objective) {
  using Scalar = typename DF::Scalar;
  const Scalar n = static_cast<Scalar>(F.rows());
  const Scalar q = mean_square((y - F * beta).eval());
  const Scalar pen = lambda / n * beta.template lpNorm<1>();
  return (objective == Objective::Lasso ? q : std::sqrt(q)) + pen;
}

namespace detail {

template <typename Scalar>
FirstStageFit<Scalar> finish_fit(const Eigen::Ref<const Matrix<Scalar>>& F, const Eigen::Ref<const Vector<Scalar>>& y,
                                 Vector<Scalar> beta, Scalar lambda, SparseMethod method, Scalar gap, long iters) {
  FirstStageFit<Scalar> fit;
  fit.coef.support = support_of(beta);
  fit.coef.beta = std::move(beta);
  fit.coef.method = method;
  fit.fitted = F * fit.coef.beta;
  fit.lambda = lambda;
  fit.residual_rms = std::sqrt(mean_square((y - fit.fitted).eval()));
  fit.kkt_gap = gap;
  fit.empty_support = fit.coef.support.empty();
  fit.iterations = iters;
  return fit;
}

}  // namespace detail

/// LASSO:  argmin_b E_n[(y - F b)^2] + (lambda/n) |b|_1  on a normalized design.
template <typename DF, typename DY>
FirstStageFit<typename DF::Scalar> lasso(const Eigen::MatrixBase<DF>& F_in, const Eigen::MatrixBase<DY>& y_in,
                                         typename DF::Scalar lambda, const SolverOptions& opts = {}) {
  using Scalar = typename DF::Scalar;
  const Matrix<Scalar>& F = F_in.derived();
  const Vector<Scalar> y = y_in;
  if (!(lambda >= 0)) throw Error(ErrorCode::InvalidArgument, "lambda must be non-negative");
  detail::check_normalized<Scalar>(F);
  CoordinateDescent<Scalar> cd(F, y);
  const Scalar gap = cd.solve(lambda, Scalar(opts.tol), opts.max_iter);
  const Scalar exact = kkt_check(F, y, cd.beta(), lambda, Objective::Lasso);
  return detail::finish_fit<Scalar>(F, y, cd.beta(), lambda, SparseMethod::Lasso, std::max(gap, exact), cd.sweeps());
}

/// Square-root LASSO:  argmin_b sqrt(E_n[(y - F b)^2]) + (lambda/n) |b|_1,
/// by exact coordinate minimization. When the minimizer interpolates y the
/// KKT certificate is undefined and PerfectFit is thrown.
template <typename DF, typename DY>
FirstStageFit<typename DF::Scalar> sqrt_lasso(const Eigen::MatrixBase<DF>& F_in, const Eigen::MatrixBase<DY>& y_in,
                                              typename DF::Scalar lambda, const SolverOptions& opts = {}) {
  using Scalar = typename DF::Scalar;
  const Matrix<Scalar>& F = F_in.derived();
  const Vector<Scalar> y = y_in;
  if (!(lambda >= 0)) throw Error(ErrorCode::InvalidArgument, "lambda must be non-negative");
  detail::check_normalized<Scalar>(F);
  if (mean_square(y) < Scalar(kPerfectFitTol)) throw Error(ErrorCode::PerfectFit, "response is identically zero");
  CoordinateDescent<Scalar> cd(F, y);
  const Scalar gap = cd.solve_sqrt(lambda, Scalar(opts.tol), opts.max_iter);
  const Scalar exact = kkt_check(F, y, cd.beta(), lambda, Objective::SqrtLasso);
  return detail::finish_fit<Scalar>(F, y, cd.beta(), lambda, SparseMethod::SqrtLasso, std::max(gap, exact), cd.sweeps());
}

/// Least squares restricted to the given support. An empty support is a
/// legitimate outcome (fitted values zero, empty_support set); collinear
/// selected columns raise RankDeficient.
template <typename DF, typename DY>
FirstStageFit<typename DF::Scalar> post_ols(const Eigen::MatrixBase<DF>& F, const Eigen::MatrixBase<DY>& y,
                                            const IndexSet& support,
                                            SparseMethod method = SparseMethod::PostLasso) {
  using Scalar = typename DF::Scalar;
  const Index n = F.rows();
  if (y.size() != n) throw Error(ErrorCode::DimensionMismatch, "post_ols: y length differs from F rows");
  FirstStageFit<Scalar> fit;
  fit.coef.method = method;
  fit.coef.beta.setZero(F.cols());
  if (support.empty()) {
    fit.fitted.setZero(n);
    fit.residual_rms = std::sqrt(mean_square(y));
    fit.empty_support = true;
    return fit;
  }
  if (static_cast<Index>(support.size()) > n)
    throw Error(ErrorCode::RankDeficient, "more selected columns than observations");
  const Matrix<Scalar> X = select_columns(F, support);
  Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(X);
  if (qr.rank() < X.cols())
    throw Error(ErrorCode::RankDeficient, "selected columns are collinear (rank " + std::to_string(qr.rank()) +
                                              " of " + std::to_string(X.cols()) + ")");
  const Vector<Scalar> b = qr.solve(y.derived().template cast<Scalar>());
  for (std::size_t k = 0; k < support.size(); ++k) fit.coef.beta(support[k]) = b(static_cast<Index>(k));
  fit.coef.support = support_of(fit.coef.beta);
  fit.fitted = F * fit.coef.beta;
  const Vector<Scalar> r = y - fit.fitted;
  fit.residual_rms = std::sqrt(mean_square(r));
  fit.kkt_gap = (X.transpose() * r).template lpNorm<Eigen::Infinity>() / static_cast<Scalar>(n);
  fit.empty_support = fit.coef.support.empty();
  return fit;
}

inline const char* to_string(SparseMethod m) noexcept {
  switch (m) {
    case SparseMethod::Lasso: return "lasso";
    case SparseMethod::SqrtLasso: return "sqrt-lasso";
    case SparseMethod::PostLasso: return "post-lasso";
    case SparseMethod::PostSqrtLasso: return "post-sqrt-lasso";
  }
  return "unknown";
}

}  // namespace sparseiv
