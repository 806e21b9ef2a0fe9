// Acceptance harness: one PASS/FAIL line per criterion with the measured values.
// Usage: acceptance [A1 A2 ...]   (no arguments runs everything)

#include "sparseiv/cli.hpp"
#include "sparseiv/first_stage.hpp"
#include "sparseiv/io.hpp"
#include "sparseiv/iv.hpp"
#include "sparseiv/montecarlo.hpp"
#include "sparseiv/penalty.hpp"
#include "sparseiv/rng.hpp"
#include "sparseiv/solvers.hpp"
#include "sparseiv/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace sparseiv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Eigen::MatrixXd ar1_design(Index n, Index p, double rho, std::uint64_t seed) {
  auto engine = rng::substream(seed, {});
  Eigen::MatrixXd raw(n, p);
  rng::fill_normal(engine, raw);
  for (Index j = 1; j < p; ++j) raw.col(j) = rho * raw.col(j - 1) + std::sqrt(1 - rho * rho) * raw.col(j);
  return normalize_columns(raw).F;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::current_path() / "acceptance_tmp" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "sparseiv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (code != 0) std::cerr << err.str();
  return code;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- A1: solver optimality --------------------------------------------------

Outcome a1() {
  const Index n = 50, p = 100;
  const int instances = 100, jitters = 1000;
  const double kkt_tol = 1e-6;
  SolverOptions opts;
  opts.tol = 1e-9;

  double worst_gap[2] = {0, 0};
  double worst_margin[2] = {INFINITY, INFINITY};  // min over jitters of obj(jittered) - obj(solution)
  int jitter_failures[2] = {0, 0}, gap_failures[2] = {0, 0}, perfect_fit = 0, solved[2] = {0, 0};

  for (int inst = 0; inst < instances; ++inst) {
    auto engine = rng::substream(2024, {static_cast<std::uint64_t>(inst)});
    Eigen::MatrixXd raw(n, p);
    rng::fill_normal(engine, raw);
    const Eigen::MatrixXd F = normalize_columns(raw).F;
    Eigen::VectorXd beta_true = Eigen::VectorXd::Zero(p);
    std::uniform_int_distribution<Index> pick(0, p - 1);
    std::normal_distribution<double> normal;
    for (int k = 0; k < 5; ++k) beta_true(pick(engine)) = normal(engine);
    Eigen::VectorXd noise(n);
    rng::fill_normal(engine, noise);
    const Eigen::VectorXd y = F * beta_true + noise;
    std::uniform_real_distribution<double> unif;
    const double u = unif(engine);  // lambda = lambda_max * 10^(-3u)

    for (int obj = 0; obj < 2; ++obj) {
      const Objective o = obj == 0 ? Objective::Lasso : Objective::SqrtLasso;
      const double lambda = lambda_max(F, y, o) * std::pow(10.0, -3.0 * u);
      FirstStageFitd fit;
      try {
        fit = obj == 0 ? lasso(F, y, lambda, opts) : sqrt_lasso(F, y, lambda, opts);
      } catch (const Error& e) {
        if (o == Objective::SqrtLasso && e.code() == ErrorCode::PerfectFit) {
          ++perfect_fit;
          continue;
        }
        throw;
      }
      ++solved[obj];
      const double gap = kkt_check(F, y, fit.coef.beta, lambda, o);
      worst_gap[obj] = std::max(worst_gap[obj], gap);
      if (gap > kkt_tol) ++gap_failures[obj];

      const double base = objective_value(F, y, fit.coef.beta, lambda, o);
      for (int j = 0; j < jitters; ++j) {
        const double scale = std::pow(10.0, -1.0 - 6.0 * unif(engine));
        Eigen::VectorXd b = fit.coef.beta;
        switch (j % 3) {
          case 0:
            for (Index k = 0; k < p; ++k) b(k) += scale * normal(engine);
            break;
          case 1:
            b(pick(engine)) += scale * normal(engine);
            break;
          default:
            for (Index k : fit.coef.support) b(k) += scale * normal(engine);
            if (fit.coef.support.empty()) b(pick(engine)) += scale * normal(engine);
        }
        const double margin = objective_value(F, y, b, lambda, o) - base;
        worst_margin[obj] = std::min(worst_margin[obj], margin);
        if (margin < -1e-13 * std::max(1.0, std::abs(base))) ++jitter_failures[obj];
      }
    }
  }
  Outcome out;
  out.pass = gap_failures[0] + gap_failures[1] + jitter_failures[0] + jitter_failures[1] == 0;
  out.detail = fmt(
      "LASSO: %d/%d solved, max kkt gap %.2e, jitter violations %d, min objective margin %.2e; "
      "sqrt-LASSO: %d solved, %d interpolating instances signaled PerfectFit (certificate undefined), "
      "max kkt gap %.2e, jitter violations %d, min objective margin %.2e",
      solved[0], instances, worst_gap[0], jitter_failures[0], worst_margin[0], solved[1], perfect_fit, worst_gap[1],
      jitter_failures[1], worst_margin[1]);
  return out;
}

// ---- A2: penalty dominance --------------------------------------------------

Outcome a2() {
  mc::McDesign d;
  d.n = 101;
  d.p = 100;
  d.f_star = 10;
  d.rng_seed = 31;
  const auto rep = mc::DesignSampler(d).draw(0);
  const Eigen::MatrixXd F = normalize_columns(rep.data.F_raw).F;
  const double sigma_v = mc::DesignSampler(d).sigma_v();
  const double c = 1.1, gamma = 1.0 / 100;
  const long draws = 2000;
  const auto spec = plugin_lambda_lasso(F, sigma_v, c, gamma, 10000, 41);
  const double rate = penalty_dominance_rate(F, sigma_v, c, spec, draws, 43);
  const double threshold = 0.99 - 3 * std::sqrt(0.01 * 0.99 / draws);
  return {rate >= threshold, fmt("frequency %.4f over %ld draws (threshold %.4f), lambda %.4f, sigma_v %.4f", rate,
                                 draws, threshold, spec.lambda, sigma_v)};
}

// ---- A3: sqrt-LASSO pivotality ----------------------------------------------

Outcome a3() {
  const Eigen::MatrixXd F = ar1_design(120, 60, 0.5, 3);
  FirstStageConfig cfg;
  cfg.method = SparseMethod::SqrtLasso;
  cfg.n_sim = 5000;
  std::vector<double> lambdas;
  auto engine = rng::substream(5, {});
  Eigen::VectorXd noise(120);
  for (double sigma : {0.1, 1.0, 10.0}) {
    for (int k = 0; k < 3; ++k) {
      rng::fill_normal(engine, noise);
      Eigen::VectorXd y = sigma * noise;
      if (k == 1) y += F.col(0) * 3.0;
      if (k == 2) y = y.array().cube().matrix();
      lambdas.push_back(fit_first_stage(F, y, cfg, 77).penalty.lambda);
    }
  }
  // The first stage draws its quantiles from substream (seed, 0).
  lambdas.push_back(plugin_lambda_sqrt_lasso(F, cfg.c, resolve_gamma(0, 60), 5000, rng::derive_seed(77, {0})).lambda);
  bool identical = true;
  for (double l : lambdas) identical = identical && l == lambdas.front();
  return {identical, fmt("%zu penalties (sigma_v in {0.1,1,10} x 3 responses, plus direct rule): all equal to %.17g",
                         lambdas.size(), lambdas.front())};
}

// ---- A4 / A5: Monte Carlo cells ----------------------------------------------

struct CsvRow {
  std::string estimator;
  double rmse, med_bias, mad, rp05;
  long n_zero, n_failed, n_used;
};

std::vector<CsvRow> read_mc_csv(const fs::path& path) {
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  std::vector<CsvRow> rows;
  while (std::getline(f, line)) {
    std::stringstream ls(line);
    std::vector<std::string> c;
    std::string cell;
    while (std::getline(ls, cell, ',')) c.push_back(cell);
    if (c.size() != 8) continue;
    rows.push_back({c[0], std::stod(c[1]), std::stod(c[2]), std::stod(c[3]), std::stod(c[4]), std::stol(c[5]),
                    std::stol(c[6]), std::stol(c[7])});
  }
  return rows;
}

const CsvRow& row(const std::vector<CsvRow>& rows, const std::string& name) {
  for (const auto& r : rows)
    if (r.estimator == name) return r;
  throw std::runtime_error("no row " + name);
}

Outcome a4() {
  const auto dir = scratch("a4");
  const int code = run_cli({"simulate", "--design", "cutoff", "--n", "500", "--fstar", "160", "--corr", "0.3",
                            "--reps", "500", "--seed", "7", "--output-dir", dir.string()});
  if (code != 0) return {false, fmt("simulate exited %d", code)};
  const auto rows = read_mc_csv(dir / "cutoff_n500_p100_fstar160_corr0.3_seed7.csv");
  const auto& oracle = row(rows, "ORACLE");
  const auto& iv = row(rows, "IV-LASSO");
  const double ratio = iv.rmse / oracle.rmse;
  const bool pass = ratio <= 1.25 && iv.rp05 >= 0.025 && iv.rp05 <= 0.09;
  return {pass, fmt("%zu estimator rows; RMSE IV-LASSO %.4f vs oracle %.4f (ratio %.3f, limit 1.25); "
                    "rp(.05) IV-LASSO %.3f (band [0.025, 0.09]); IV-LASSO used %ld, none selected %ld, failed %ld",
                    rows.size(), iv.rmse, oracle.rmse, ratio, iv.rp05, iv.n_used, iv.n_zero, iv.n_failed)};
}

Outcome a5() {
  mc::McDesign d;
  d.n = 500;
  d.p = 100;
  d.f_star = 10;
  d.corr_ev = 0.3;
  d.n_reps = 500;
  d.rng_seed = 7;
  const auto r = mc::run_cell(d, {mc::Estimator::TslsAll, mc::Estimator::FullerAll, mc::Estimator::IvLasso});
  const double b2sls = std::abs(r.metrics[0].med_bias);
  const double bfull = std::abs(r.metrics[1].med_bias);
  const double blasso = std::abs(r.metrics[2].med_bias);
  const bool pass = b2sls > blasso && bfull < b2sls;
  return {pass, fmt("|median bias|: 2SLS(100) %.4f, FULL(100) %.4f, IV-LASSO %.4f (IV-LASSO used %ld of %ld, "
                    "none selected %ld)",
                    b2sls, bfull, blasso, r.metrics[2].n_used, d.n_reps, r.metrics[2].n_zero_selected)};
}

// ---- A6: split-sample IV -----------------------------------------------------

Outcome a6() {
  mc::McDesign d;
  d.n = 500;
  d.p = 100;
  d.f_star = 160;
  d.rng_seed = 7;
  d.n_reps = 200;
  const mc::DesignSampler sampler(d);
  FirstStageConfig cfg;
  cfg.method = SparseMethod::PostLasso;
  std::vector<double> est;
  double worst_swap = 0.0;
  long not_ok = 0, mismatched_status = 0;
  for (long r = 0; r < d.n_reps; ++r) {
    const auto rep = sampler.draw(r);
    const std::uint64_t seed = rng::derive_seed(d.rng_seed, {static_cast<std::uint64_t>(r), 3});
    const auto [a, b] = random_halves(d.n, seed);
    const auto ab = fit_split_sample_iv(rep.data, a, b, cfg, seed);
    const auto ba = fit_split_sample_iv(rep.data, b, a, cfg, seed);
    if (ab.status != ba.status) ++mismatched_status;
    if (!ab.ok()) {
      ++not_ok;
      continue;
    }
    if (ba.ok()) worst_swap = std::max(worst_swap, std::abs(ab.alpha(0) - ba.alpha(0)));
    est.push_back(ab.alpha(0));
  }
  const double med = est.empty() ? NAN : stats::median(est);
  const bool pass = !est.empty() && std::abs(med - 1.0) <= 0.05 && worst_swap <= 1e-12 && mismatched_status == 0;
  return {pass, fmt("median alpha_ab %.4f over %zu usable reps (%ld without an estimate); "
                    "max |alpha_ab - alpha_ba| %.2e (limit 1e-12), status mismatches %ld",
                    med, est.size(), not_ok, worst_swap, mismatched_status)};
}

// ---- A7: first-stage rate ----------------------------------------------------

Outcome a7() {
  struct Case {
    Index n, p, s;
  };
  const Case cases[] = {{200, 400, 5}, {400, 800, 5}};
  const double sigma_v = 1.0, c = 1.1;
  const int reps = 100;
  bool pass = true;
  std::string detail;
  for (const auto& cs : cases) {
    const Eigen::MatrixXd F = ar1_design(cs.n, cs.p, 0.5, 100 + static_cast<std::uint64_t>(cs.n));
    Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(cs.p);
    beta0.head(cs.s).setOnes();
    const Eigen::VectorXd D = F * beta0;
    const auto spec = plugin_lambda_lasso(F, sigma_v, c, resolve_gamma(0, cs.p), 10000, 9);
    std::vector<double> err_lasso, err_post;
    Eigen::VectorXd v(cs.n);
    for (int r = 0; r < reps; ++r) {
      auto engine = rng::substream(17, {static_cast<std::uint64_t>(cs.n), static_cast<std::uint64_t>(r)});
      rng::fill_normal(engine, v);
      const Eigen::VectorXd y = D + sigma_v * v;
      const auto fit = lasso(F, y, spec.lambda);
      const auto post = post_ols(F, y, fit.coef.support);
      err_lasso.push_back(std::sqrt(mean_square((fit.fitted - D).eval())));
      err_post.push_back(std::sqrt(mean_square((post.fitted - D).eval())));
    }
    const double bound = 3 * sigma_v * std::sqrt(cs.s * std::log(double(cs.p)) / cs.n);
    const double ml = stats::median(err_lasso), mp = stats::median(err_post);
    pass = pass && ml <= bound && mp <= bound;
    detail += fmt("%s(n=%ld, p=%ld): median prediction error LASSO %.4f, post-LASSO %.4f, bound %.4f",
                  detail.empty() ? "" : "; ", static_cast<long>(cs.n), static_cast<long>(cs.p), ml, mp, bound);
  }
  return {pass, detail};
}

// ---- A8: calibration closed forms ----------------------------------------------

Outcome a8() {
  const double a = mc::sigma_v2_from_fstar(mc::pi_vector(mc::PiDesign::CutOff, 100), mc::toeplitz_covariance(100, 0.5),
                                           101, 10);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(100);
  e1(0) = 1;
  const double b = mc::sigma_v2_from_fstar(e1, mc::toeplitz_covariance(100, 0.5), 500, 40);
  const bool pass = std::abs(a - 22.4725) <= 1e-10 && std::abs(b - 12.5) <= 1e-10;
  return {pass, fmt("cut-off n=101 F*=10: %.12f (target 22.4725); e1 n=500 F*=40: %.12f (target 12.5)", a, b)};
}

// ---- A9: quantile closed form and bound chain -----------------------------------

Outcome a9() {
  const Index n = 100;
  const double gamma = 0.05;
  const long n_sim = 100000;
  const Eigen::MatrixXd f = ar1_design(n, 1, 0.0, 11);
  const double exact = std::sqrt(double(n)) * stats::normal_quantile(1 - gamma / 2);
  // SE of the empirical (1-gamma) quantile of |N(0, n)|.
  const double z = stats::normal_quantile(1 - gamma / 2);
  const double density = 2.0 * std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI) / std::sqrt(double(n));
  const double se = std::sqrt(gamma * (1 - gamma) / double(n_sim)) / density;
  const double sim = simulate_score_quantile_lasso(f, gamma, n_sim, 13);
  const bool quantile_ok = std::abs(sim - exact) <= 3 * se;

  int designs = 0, violations = 0;
  double min_slack = INFINITY;
  for (double rho : {0.8, 0.9})
    for (Index nn : {100, 500})
      for (Index p : {50, 100, 200})
        for (double g : {0.05, 1.0 / double(p)}) {
          const Eigen::MatrixXd F = ar1_design(nn, p, rho, 1000 + static_cast<std::uint64_t>(nn + p));
          const double lam = simulate_score_quantile_lasso(F, g, 10000, 21);
          const double bq = score_quantile_bound(nn, p, g), bl = score_log_bound(nn, p, g);
          ++designs;
          if (!(lam <= bq && bq <= bl)) ++violations;
          min_slack = std::min(min_slack, (bq - lam) / bq);
        }

  // Simulation design (rho = 0.5): reported, not scored.
  const Eigen::MatrixXd F5 = ar1_design(101, 100, 0.5, 77);
  const double lam5 = simulate_score_quantile_lasso(F5, 0.01, 10000, 21);
  const double bq5 = score_quantile_bound(101, 100, 0.01);

  return {quantile_ok && violations == 0,
          fmt("p=1: simulated %.4f vs closed form %.4f (|diff| %.4f, 3 SE %.4f); bound chain on %d designs "
              "(AR(1) rho in {.8,.9}): %d violations, min relative slack %.3f; rho=.5 design (information): "
              "Lambda %.4f vs bound %.4f",
              sim, exact, std::abs(sim - exact), 3 * se, designs, violations, min_slack, lam5, bq5)};
}

// ---- A10: determinism and scale ---------------------------------------------------

Outcome a10() {
  // Determinism across runs and worker counts.
  const std::vector<std::string> cell = {"simulate", "--design", "exponential", "--n", "101", "--fstar", "10",
                                         "--reps", "8", "--estimators", "all", "--audit", "--export-data",
                                         "--seed", "19"};
  std::vector<fs::path> dirs;
  int code = 0;
  for (const char* jobs : {"1", "1", "8"}) {
    dirs.push_back(scratch(std::string("a10_sim") + std::to_string(dirs.size())));
    auto args = cell;
    args.insert(args.end(), {"--jobs", jobs, "--output-dir", dirs.back().string()});
    code |= run_cli(args);
  }
  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    ++files;
    const auto a = slurp(entry.path());
    for (std::size_t k = 1; k < dirs.size(); ++k)
      if (slurp(dirs[k] / entry.path().filename()) != a) ++differing;
  }

  // Scale: n = 5000, p = 1530 fit from a CSV file.
  const Index n = 5000, p = 1530;
  auto engine = rng::substream(23, {});
  Eigen::MatrixXd Z(n, p);
  rng::fill_normal(engine, Z);
  Eigen::MatrixXd u(n, 2);
  rng::fill_normal(engine, u);
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(p);
  pi.head(10) = Eigen::VectorXd::LinSpaced(10, 0.3, 0.03);
  const Eigen::VectorXd v = 0.5 * u.col(0) + std::sqrt(0.75) * u.col(1);
  const Eigen::VectorXd y2 = Z * pi + v;
  const Eigen::VectorXd y1 = y2 + u.col(0);
  Eigen::MatrixXd W(n, 2);
  W.col(0).setOnes();
  for (Index i = 0; i < n; ++i) W(i, 1) = (i % 7 == 0) ? 1.0 : 0.0;
  IvDataset data = build_dataset(y1, y2, W, Z);
  data.control_names = {"w_const", "w_group"};
  data.instrument_names.clear();
  for (Index j = 0; j < p; ++j) data.instrument_names.push_back("z_" + std::to_string(j + 1));
  const auto dir = scratch("a10_fit");
  {
    std::ofstream f(dir / "large.csv");
    io::write_dataset_csv(f, data);
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::string fit_out;
  const int fit_code = run_cli({"fit", "--data", (dir / "large.csv").string(), "--seed", "29", "--format", "csv"},
                               &fit_out);
  const double fit_seconds = seconds_since(t0);
  fs::remove_all(dir);
  std::string first_row = fit_out.substr(fit_out.find('\n') + 1);
  first_row = first_row.substr(0, first_row.find('\n'));

  const bool pass = code == 0 && files > 0 && differing == 0 && fit_code == 0 && fit_seconds < 300;
  return {pass, fmt("simulate: %zu files x 3 runs (jobs 1, 1, 8), %zu differing; fit n=5000 p=1530: exit %d in "
                    "%.1f s (limit 300 s), result row '%s'",
                    files, differing, fit_code, fit_seconds, first_row.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5},
      {"A6", a6}, {"A7", a7}, {"A8", a8}, {"A9", a9}, {"A10", a10},
  };
  std::set<std::string> wanted(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!wanted.empty() && !wanted.count(name)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << name << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ["
              << fmt("%.1f s", seconds_since(t0)) << "]" << std::endl;
  }
  fs::remove_all(fs::current_path() / "acceptance_tmp");
  return failed == 0 ? 0 : 1;
}
