#include "sparseiv/first_stage.hpp"

#include "sparseiv/rng.hpp"

namespace sparseiv {

FirstStageResult fit_first_stage(const Eigen::MatrixXd& F, const Eigen::VectorXd& y, const FirstStageConfig& config,
                                 std::uint64_t rng_seed, const std::optional<ScoreQuantiles>& quantiles) {
  const Objective objective = objective_of(config.method);
  const double gamma = resolve_gamma(config.gamma, F.cols());
  FirstStageResult out;

  if (config.cross_validate) {
    const auto grid = default_lambda_grid(F, y, objective, config.cv_grid);
    out.penalty = cross_validate_lambda(F, y, config.cv_folds, grid, rng::derive_seed(rng_seed, {1}), objective,
                                        config.solver)
                      .spec;
  } else {
    const ScoreQuantiles q = quantiles ? *quantiles
                                       : simulate_score_quantiles(F, gamma, config.n_sim,
                                                                  rng::derive_seed(rng_seed, {0}), config.jobs);
    if (objective == Objective::Lasso) {
      double sigma = 0.0;
      if (config.sigma_v) {
        sigma = *config.sigma_v;
      } else {
        sigma = estimate_sigma_v_from_quantile(F, y, config.c, q.lasso, config.sigma_rounds, config.solver).sigma;
      }
      out.penalty = plugin_lambda_lasso_from_quantile(q.lasso, sigma, config.c, gamma, config.n_sim);
    } else {
      out.penalty = plugin_lambda_sqrt_lasso_from_quantile(q.sqrt_lasso, config.c, gamma, config.n_sim);
    }
  }

  FirstStageFitd penalized = objective == Objective::Lasso ? lasso(F, y, out.penalty.lambda, config.solver)
                                                           : sqrt_lasso(F, y, out.penalty.lambda, config.solver);
  if (!is_post(config.method)) {
    out.fit = std::move(penalized);
    return out;
  }
  out.fit = post_ols(F, y, penalized.coef.support, config.method);
  out.fit.lambda = penalized.lambda;
  out.fit.iterations = penalized.iterations;
  return out;
}

}  // namespace sparseiv
