#include "sparseiv/penalty.hpp"

#include "sparseiv/rng.hpp"
#include "sparseiv/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sparseiv {

const char* to_string(PenaltyRule r) noexcept {
  switch (r) {
    case PenaltyRule::PluginLasso: return "plugin-lasso";
    case PenaltyRule::PluginSqrtLasso: return "plugin-sqrt-lasso";
    case PenaltyRule::CrossValidation: return "cross-validation";
  }
  return "unknown";
}

namespace {

constexpr long kDrawBlock = 256;

void check_sim_args(const Eigen::MatrixXd& F, double gamma, long n_sim) {
  if (F.rows() < 1 || F.cols() < 1) throw Error(ErrorCode::DimensionMismatch, "empty design");
  if (n_sim < 1000) throw Error(ErrorCode::InvalidArgument, "n_sim must be at least 1000");
  if (!(gamma > 0 && gamma < 1)) throw Error(ErrorCode::InvalidArgument, "gamma must lie in (0,1)");
}

}  // namespace

ScoreQuantiles simulate_score_quantiles(const Eigen::MatrixXd& F, double gamma, long n_sim, std::uint64_t rng_seed,
                                        unsigned jobs) {
  check_sim_args(F, gamma, n_sim);
  const Index n = F.rows();
  std::vector<double> lasso_stats(static_cast<std::size_t>(n_sim));
  std::vector<double> sqrt_stats(static_cast<std::size_t>(n_sim));
  const auto blocks = static_cast<std::size_t>((n_sim + kDrawBlock - 1) / kDrawBlock);

  rng::parallel_for(blocks, jobs, [&](std::size_t b) {
    const long first = static_cast<long>(b) * kDrawBlock;
    const long count = std::min(kDrawBlock, n_sim - first);
    // One substream per fixed-size block keeps the draws independent of jobs.
    Eigen::MatrixXd G(n, count);
    auto engine = rng::substream(rng_seed, {static_cast<std::uint64_t>(b)});
    rng::fill_normal(engine, G);
    // n E_n[f_j g] = f_j' g
    const Eigen::MatrixXd scores = F.transpose() * G;
    for (long k = 0; k < count; ++k) {
      const double stat = scores.col(k).lpNorm<Eigen::Infinity>();
      const auto slot = static_cast<std::size_t>(first + k);
      lasso_stats[slot] = stat;
      sqrt_stats[slot] = stat / std::sqrt(mean_square(G.col(k)));
    }
  });

  return {stats::nearest_rank_quantile(std::move(lasso_stats), 1.0 - gamma),
          stats::nearest_rank_quantile(std::move(sqrt_stats), 1.0 - gamma)};
}

double simulate_score_quantile_lasso(const Eigen::MatrixXd& F, double gamma, long n_sim, std::uint64_t rng_seed) {
  return simulate_score_quantiles(F, gamma, n_sim, rng_seed).lasso;
}

double simulate_score_quantile_sqrt_lasso(const Eigen::MatrixXd& F, double gamma, long n_sim,
                                          std::uint64_t rng_seed) {
  return simulate_score_quantiles(F, gamma, n_sim, rng_seed).sqrt_lasso;
}

double score_quantile_bound(Index n, Index p, double gamma) {
  return std::sqrt(static_cast<double>(n)) * stats::normal_quantile(1.0 - gamma / (2.0 * static_cast<double>(p)));
}

double score_log_bound(Index n, Index p, double gamma) {
  return std::sqrt(2.0 * static_cast<double>(n) * std::log(static_cast<double>(p) / gamma));
}

PenaltySpec plugin_lambda_lasso_from_quantile(double quantile, double sigma_v, double c, double gamma, long n_sim) {
  if (!(sigma_v > 0)) throw Error(ErrorCode::InvalidArgument, "sigma_v must be positive");
  PenaltySpec spec;
  spec.rule = PenaltyRule::PluginLasso;
  spec.c = c;
  spec.gamma = gamma;
  spec.n_sim = n_sim;
  spec.score_quantile = quantile;
  spec.lambda = c * 2.0 * sigma_v * quantile;
  spec.sigma_v_used = sigma_v;
  return spec;
}

PenaltySpec plugin_lambda_lasso(const Eigen::MatrixXd& F, double sigma_v, double c, double gamma, long n_sim,
                                std::uint64_t rng_seed) {
  if (!(sigma_v > 0)) throw Error(ErrorCode::InvalidArgument, "sigma_v must be positive");
  gamma = resolve_gamma(gamma, F.cols());
  return plugin_lambda_lasso_from_quantile(simulate_score_quantile_lasso(F, gamma, n_sim, rng_seed), sigma_v, c,
                                           gamma, n_sim);
}

PenaltySpec plugin_lambda_sqrt_lasso_from_quantile(double quantile, double c, double gamma, long n_sim) {
  PenaltySpec spec;
  spec.rule = PenaltyRule::PluginSqrtLasso;
  spec.c = c;
  spec.gamma = gamma;
  spec.n_sim = n_sim;
  spec.score_quantile = quantile;
  spec.lambda = c * quantile;
  return spec;
}

PenaltySpec plugin_lambda_sqrt_lasso(const Eigen::MatrixXd& F, double c, double gamma, long n_sim,
                                     std::uint64_t rng_seed) {
  gamma = resolve_gamma(gamma, F.cols());
  return plugin_lambda_sqrt_lasso_from_quantile(simulate_score_quantile_sqrt_lasso(F, gamma, n_sim, rng_seed), c,
                                                gamma, n_sim);
}

double penalty_dominance_rate(const Eigen::MatrixXd& F, double sigma_v, double c, const PenaltySpec& penalty,
                              long n_rep, std::uint64_t rng_seed) {
  if (n_rep < 1) throw Error(ErrorCode::InvalidArgument, "n_rep must be positive");
  const Index n = F.rows();
  long hits = 0;
  Eigen::VectorXd v(n);
  for (long r = 0; r < n_rep; ++r) {
    auto engine = rng::substream(rng_seed, {static_cast<std::uint64_t>(r)});
    rng::fill_normal(engine, v);
    v *= sigma_v;
    const double sup = (F.transpose() * v).lpNorm<Eigen::Infinity>();  // n |E_n[f v]|_inf
    const double score = penalty.rule == PenaltyRule::PluginSqrtLasso ? c * sup / std::sqrt(mean_square(v))
                                                                      : c * 2.0 * sup;
    if (penalty.lambda >= score) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_rep);
}

SigmaEstimate estimate_sigma_v_from_quantile(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, double c,
                                             double score_quantile, int max_rounds, const SolverOptions& opts) {
  const Index n = F.rows();
  if (y.size() != n) throw Error(ErrorCode::DimensionMismatch, "y length differs from F rows");
  if (!((y.array() - y.mean()).matrix().squaredNorm() > 0))
    throw Error(ErrorCode::InvalidArgument, "response is constant");

  SigmaEstimate est;
  double sigma = std::sqrt(mean_square(y));
  for (int round = 1; round <= max_rounds; ++round) {
    const double lambda = c * 2.0 * sigma * score_quantile;
    const auto pen = lasso(F, y, lambda, opts);
    Eigen::VectorXd resid;
    Index s = static_cast<Index>(pen.coef.support.size());
    try {
      resid = y - post_ols(F, y, pen.coef.support).fitted;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::RankDeficient) throw;
      resid = y - pen.fitted;
    }
    double next = kSigmaFloor;
    if (s < n) next = std::sqrt(resid.squaredNorm() / static_cast<double>(n - s));
    next = std::max(next, kSigmaFloor);

    const double rel = std::abs(next - sigma) / sigma;
    sigma = next;
    est.rounds = round;
    est.selected = s;
    if (rel < 1e-3) {
      est.converged = true;
      break;
    }
  }
  est.sigma = sigma;
  return est;
}

SigmaEstimate estimate_sigma_v(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, double c, double gamma,
                               long n_sim, std::uint64_t rng_seed, int max_rounds) {
  gamma = resolve_gamma(gamma, F.cols());
  const double q = simulate_score_quantile_lasso(F, gamma, n_sim, rng_seed);
  return estimate_sigma_v_from_quantile(F, y, c, q, max_rounds);
}

double lambda_max(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, Objective objective) {
  const double sup = (F.transpose() * y).lpNorm<Eigen::Infinity>();  // n max_j |E_n[f_j y]|
  if (objective == Objective::Lasso) return 2.0 * sup;
  const double rms = std::sqrt(mean_square(y));
  return rms > 0 ? sup / rms : 0.0;
}

std::vector<double> default_lambda_grid(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, Objective objective,
                                        int count, double ratio) {
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "grid needs at least one value");
  const double top = lambda_max(F, y, objective);
  if (!(top > 0)) throw Error(ErrorCode::InvalidArgument, "response is uncorrelated with every instrument");
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double t = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
    grid[static_cast<std::size_t>(k)] = top * std::pow(ratio, t);
  }
  return grid;
}

std::vector<int> assign_folds(Index n, int k_folds, std::uint64_t rng_seed) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  auto engine = rng::substream(rng_seed, {0x666f6c64});
  for (Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Index> pick(0, i);
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(engine))]);
  }
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (Index pos = 0; pos < n; ++pos) fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos)])] = static_cast<int>(pos % k_folds);
  return fold;
}

CrossValidationPath cross_validate_lambda(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, int k_folds,
                                          std::vector<double> lambda_grid, std::uint64_t rng_seed,
                                          Objective objective, const SolverOptions& opts) {
  const Index n = F.rows();
  if (y.size() != n) throw Error(ErrorCode::DimensionMismatch, "y length differs from F rows");
  if (k_folds < 2 || k_folds > n) throw Error(ErrorCode::InvalidArgument, "k_folds must be in [2, n]");
  if (lambda_grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty lambda grid");
  std::sort(lambda_grid.begin(), lambda_grid.end(), std::greater<>());

  const std::size_t m = lambda_grid.size();
  std::vector<double> sse(m, 0.0);
  std::vector<char> valid(m, 1);
  const auto fold_of = assign_folds(n, k_folds, rng_seed);

  for (int k = 0; k < k_folds; ++k) {
    IndexSet train, test;
    for (Index i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == k ? test : train).push_back(i);
    const Eigen::MatrixXd F_train_raw = select_rows(F, train);
    const Eigen::MatrixXd F_test_raw = select_rows(F, test);
    const Eigen::VectorXd y_train = select_rows(y, train);
    const Eigen::VectorXd y_test = select_rows(y, test);

    // Columns that vanish on the training fold cannot be selected there.
    IndexSet usable;
    for (Index j = 0; j < F.cols(); ++j)
      if (mean_square(F_train_raw.col(j)) >= kZeroColumnTol) usable.push_back(j);
    if (usable.empty()) {
      std::fill(valid.begin(), valid.end(), 0);
      continue;
    }
    const auto design = normalize_columns(select_columns(F_train_raw, usable));
    const Eigen::MatrixXd F_test =
        select_columns(F_test_raw, usable) * design.scale.cwiseInverse().asDiagonal();

    CoordinateDescent<double> cd(design.F, y_train);
    bool dead = false;
    for (std::size_t g = 0; g < m; ++g) {
      if (dead) {
        valid[g] = 0;
        continue;
      }
      try {
        if (objective == Objective::Lasso)
          cd.solve(lambda_grid[g], opts.tol, opts.max_iter);
        else
          cd.solve_sqrt(lambda_grid[g], opts.tol, opts.max_iter);
        sse[g] += (y_test - F_test * cd.beta()).squaredNorm();
        // Past a saturated training fit smaller penalties only move toward
        // interpolation, where coordinate descent crawls; the path stops here.
        const auto nnz = (cd.beta().array() != 0).count();
        const double rss = (y_train - design.F * cd.beta()).squaredNorm();
        if (nnz >= y_train.size() || rss <= kSaturatedFit * y_train.squaredNorm()) dead = true;
      } catch (const Error&) {
        // Perfect fit or a stalled solve: the rest of the path is no better posed.
        valid[g] = 0;
        dead = true;
      }
    }
  }

  CrossValidationPath path;
  path.lambdas = lambda_grid;
  path.valid = valid;
  path.errors.resize(m, std::numeric_limits<double>::quiet_NaN());
  std::size_t best = m;
  for (std::size_t g = 0; g < m; ++g) {
    if (!valid[g]) continue;
    path.errors[g] = sse[g] / static_cast<double>(n);
    if (best == m || path.errors[g] < path.errors[best]) best = g;
  }
  if (best == m) throw Error(ErrorCode::NonConvergence, "no penalty on the grid could be fit on every fold");

  path.spec.rule = PenaltyRule::CrossValidation;
  path.spec.lambda = lambda_grid[best];
  path.spec.n_sim = 0;
  path.spec.c = 1.0;
  return path;
}

}  // namespace sparseiv
