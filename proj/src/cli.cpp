#include "sparseiv/cli.hpp"

#include "sparseiv/first_stage.hpp"
#include "sparseiv/gram.hpp"
#include "sparseiv/io.hpp"
#include "sparseiv/iv.hpp"
#include "sparseiv/montecarlo.hpp"
#include "sparseiv/penalty.hpp"
#include "sparseiv/stats.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace sparseiv::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string format = "table";
  unsigned jobs = 1;
};

struct DesignArgs {
  std::string design = "cutoff";
  Index n = 500;
  Index p = 100;
  double f_star = 160.0;
  double corr = 0.3;
  double rho_z = 0.5;
  double sigma_e2 = 1.0;
  double sigma_z2 = 1.0;
  double alpha = 1.0;
  long reps = 500;

  mc::McDesign to_design(std::uint64_t seed) const {
    mc::McDesign d;
    if (design == "cutoff") {
      d.design = mc::PiDesign::CutOff;
    } else if (design == "exponential") {
      d.design = mc::PiDesign::Exponential;
    } else {
      throw UsageError("--design must be 'cutoff' or 'exponential'");
    }
    d.n = n;
    d.p = p;
    d.f_star = f_star;
    d.corr_ev = corr;
    d.rho_z = rho_z;
    d.sigma_e2 = sigma_e2;
    d.sigma_z2 = sigma_z2;
    d.alpha_true = alpha;
    d.n_reps = reps;
    d.rng_seed = seed;
    try {
      d.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    return d;
  }
};

void add_common(CLI::App* app, Common& c, bool seed_required) {
  auto* seed = app->add_option("--seed", c.seed, "Random seed");
  if (seed_required) seed->required();
  app->add_option("--output-dir", c.output_dir, "Directory for result files (default: $SPARSEIV_OUTPUT_DIR or .)");
  app->add_option("--format", c.format, "Standard output format")->check(CLI::IsMember({"table", "csv", "json"}));
  app->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app->add_option("--config", c.config, "key = value file; command-line flags win");
}

void add_design(CLI::App* app, DesignArgs& d) {
  app->add_option("--design", d.design, "cutoff or exponential")->check(CLI::IsMember({"cutoff", "exponential"}));
  app->add_option("--n", d.n, "Sample size");
  app->add_option("--p", d.p, "Number of instruments");
  app->add_option("--fstar", d.f_star, "First-stage strength F*");
  app->add_option("--corr", d.corr, "Corr(e, v)");
  app->add_option("--rho-z", d.rho_z, "Toeplitz correlation of the instruments");
  app->add_option("--sigma-e2", d.sigma_e2, "Structural error variance");
  app->add_option("--sigma-z2", d.sigma_z2, "Instrument variance");
  app->add_option("--alpha", d.alpha, "True structural coefficient");
}

fs::path output_dir(const Common& c) {
  fs::path dir = c.output_dir;
  if (dir.empty()) {
    const char* env = std::getenv("SPARSEIV_OUTPUT_DIR");
    dir = env && *env ? fs::path(env) : fs::path(".");
  }
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << contents;
}

// key = value lines; '#' starts a comment. Keys are long option names
// without the leading dashes.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (key.empty()) throw UsageError("config line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  for (const auto& a : args)
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  return false;
}

// Prepends config-file entries (for keys absent from the command line) to
// the subcommand's arguments.
std::vector<std::string> merge_config(CLI::App* sub, const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::vector<std::string> merged;
  for (const auto& [key, value] : read_config(path)) {
    if (key == "config") continue;
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt) throw UsageError("config file: unknown key '" + key + "'");
    if (given_on_command_line(args, key)) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes" || value == "on") merged.push_back("--" + key);
      else if (!(value == "false" || value == "0" || value == "no" || value == "off"))
        throw UsageError("config file: '" + key + "' expects true or false");
    } else {
      merged.push_back("--" + key);
      merged.push_back(value);
    }
  }
  merged.insert(merged.end(), args.begin(), args.end());
  return merged;
}

std::vector<mc::Estimator> parse_roster(const std::string& spec) {
  if (spec == "all") return mc::full_roster();
  if (spec == "table") return mc::table_roster();
  std::vector<mc::Estimator> out;
  std::istringstream is(spec);
  std::string key;
  while (std::getline(is, key, ',')) {
    const auto e = mc::parse_estimator(key);
    if (!e) throw UsageError("unknown estimator '" + key + "'");
    out.push_back(*e);
  }
  if (out.empty()) throw UsageError("--estimators is empty");
  return out;
}

SparseMethod parse_method(const std::string& m) {
  if (m == "lasso") return SparseMethod::Lasso;
  if (m == "sqrt-lasso") return SparseMethod::SqrtLasso;
  if (m == "post-lasso") return SparseMethod::PostLasso;
  if (m == "post-sqrt-lasso") return SparseMethod::PostSqrtLasso;
  throw UsageError("unknown method '" + m + "'");
}

std::string fmt4(double x) {
  std::ostringstream os;
  os << std::setprecision(4) << x;
  return os.str();
}

// ---- simulate ------------------------------------------------------------

struct SimulateArgs {
  Common common;
  DesignArgs design;
  std::string estimators = "table";
  bool sigma_known = false;
  bool grid = false;
  bool audit = false;
  bool export_data = false;
  long n_sim = 10000;
  double c = 1.1;
  int cv_folds = 10;
};

std::vector<mc::McDesign> grid_cells(const mc::McDesign& base) {
  std::vector<mc::McDesign> out;
  for (auto design : {mc::PiDesign::CutOff, mc::PiDesign::Exponential})
    for (Index n : {Index{101}, Index{500}})
      for (double corr : {0.3, 0.6})
        for (double f : {10.0, 40.0, 160.0}) {
          mc::McDesign d = base;
          d.design = design;
          d.n = n;
          d.corr_ev = corr;
          d.f_star = f;
          out.push_back(d);
        }
  return out;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const auto roster = parse_roster(a.estimators);
  const mc::McDesign base = a.design.to_design(a.common.seed);
  const auto cells = a.grid ? grid_cells(base) : std::vector<mc::McDesign>{base};
  mc::McOptions opt;
  opt.jobs = a.common.jobs;
  opt.sigma_known = a.sigma_known;
  opt.n_sim = a.n_sim;
  opt.c = a.c;
  opt.cv_folds = a.cv_folds;
  const fs::path dir = output_dir(a.common);

  for (const auto& cell : cells) {
    mc::McResult result;
    try {
      result = mc::run_cell(cell, roster, opt);
    } catch (const Error& e) {
      err << "cell " << cell.label() << " failed: " << e.what() << '\n';
      continue;
    }
    const std::string stem = cell.label() + "_seed" + std::to_string(cell.rng_seed);
    std::ostringstream csv, json;
    io::write_mc_csv(csv, result);
    io::write_mc_json(json, result);
    write_file(dir / (stem + ".csv"), csv.str());
    write_file(dir / (stem + ".json"), json.str());
    if (a.audit) {
      std::ostringstream audit;
      io::write_audit_csv(audit, result);
      write_file(dir / (stem + "_audit.csv"), audit.str());
    }
    if (a.export_data) {
      std::ostringstream data;
      io::write_dataset_csv(data, mc::gen_replication(cell, 0).data);
      write_file(dir / (stem + "_rep0.csv"), data.str());
    }
    if (a.common.format == "csv") out << csv.str();
    else if (a.common.format == "json") out << json.str();
    else io::write_mc_table(out, result);
    err << "wrote " << (dir / (stem + ".csv")).string() << " (" << std::fixed << std::setprecision(1)
        << result.wall_time << " s)" << std::defaultfloat << '\n';
  }
  return kOk;
}

// ---- fit -----------------------------------------------------------------

struct FitArgs {
  Common common;
  std::string data;
  std::string method = "post-lasso";
  bool cv = false;
  bool split = false;
  bool compare = false;
  double c = 1.1;
  double gamma = 0.0;
  long n_sim = 10000;
  std::optional<double> sigma_v;
  std::string residual = "structural";
  double level = 0.05;
};

ordered_json estimate_json(const IvEstimate& e, double level) {
  ordered_json j;
  j["estimator"] = e.method.estimator;
  j["status"] = to_string(e.status);
  j["selected"] = e.method.selected;
  if (e.ok()) {
    const double z = stats::normal_quantile(1 - level / 2);
    j["alpha1"] = e.alpha(0);
    j["se"] = e.se(0);
    j["ci_low"] = e.alpha(0) - z * e.se(0);
    j["ci_high"] = e.alpha(0) + z * e.se(0);
  } else {
    j["reason"] = e.reason;
  }
  return j;
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const IvDataset data = io::read_dataset_csv(a.data);
  FirstStageConfig cfg;
  cfg.method = parse_method(a.method);
  cfg.cross_validate = a.cv;
  cfg.c = a.c;
  cfg.gamma = a.gamma;
  cfg.n_sim = a.n_sim;
  cfg.sigma_v = a.sigma_v;
  cfg.jobs = a.common.jobs;
  const ResidualBasis basis = a.residual == "instrument" ? ResidualBasis::Instrument : ResidualBasis::Structural;

  std::vector<IvEstimate> rows;
  IndexSet support;
  std::optional<PenaltySpec> penalty;
  if (a.split) {
    rows.push_back(fit_split_sample_iv(data, cfg, a.common.seed));
  } else {
    const auto design = normalize_columns(data.F_raw);
    const auto first = fit_first_stage(design.F, data.y2, cfg, a.common.seed);
    support = first.fit.coef.support;
    penalty = first.penalty;
    IvEstimate e = fit_optimal_iv(data, first.fit, basis);
    e.method.penalty = first.penalty;
    rows.push_back(std::move(e));
    if (a.compare && !support.empty()) {
      rows.push_back(fit_2sls(data, support));
      rows.push_back(fit_fuller(data, support));
    }
  }

  std::vector<std::string> names;
  for (Index j : support) names.push_back(data.instrument_names[static_cast<std::size_t>(j)]);
  const IvEstimate& main = rows.front();

  if (a.common.format == "json") {
    ordered_json j;
    j["n"] = data.n();
    j["p"] = data.p();
    j["first_stage"] = main.method.first_stage;
    if (penalty) {
      j["lambda"] = penalty->lambda;
      j["penalty_rule"] = to_string(penalty->rule);
      if (penalty->sigma_v_used) j["sigma_v"] = *penalty->sigma_v_used;
    }
    j["selected"] = names;
    ordered_json est = ordered_json::array();
    for (const auto& r : rows) est.push_back(estimate_json(r, a.level));
    j["estimates"] = std::move(est);
    out << j.dump(2) << '\n';
  } else if (a.common.format == "csv") {
    out << "estimator,status,alpha1,se,ci_low,ci_high,selected\n";
    const double z = stats::normal_quantile(1 - a.level / 2);
    for (const auto& r : rows) {
      out << r.method.estimator << ',' << to_string(r.status) << ',';
      if (r.ok())
        out << io::format_full(r.alpha(0)) << ',' << io::format_full(r.se(0)) << ','
            << io::format_full(r.alpha(0) - z * r.se(0)) << ',' << io::format_full(r.alpha(0) + z * r.se(0));
      else
        out << ",,,";
      out << ',' << r.method.selected << '\n';
    }
  } else {
    out << "n = " << data.n() << ", instruments = " << data.p() << ", controls = " << data.k_w() << '\n';
    out << "first stage: " << main.method.first_stage << (a.cv ? " (cross-validated)" : " (plug-in)");
    if (penalty) out << ", lambda = " << fmt4(penalty->lambda);
    if (penalty && penalty->sigma_v_used) out << ", sigma_v = " << fmt4(*penalty->sigma_v_used);
    out << '\n';
    if (!a.split) {
      out << "selected instruments: " << names.size();
      if (!names.empty()) {
        out << " (";
        for (std::size_t k = 0; k < names.size(); ++k) out << (k ? ", " : "") << names[k];
        out << ')';
      }
      out << '\n';
    }
    const double z = stats::normal_quantile(1 - a.level / 2);
    const int ci = static_cast<int>(std::lround(100 * (1 - a.level)));
    for (const auto& r : rows) {
      out << std::left << std::setw(16) << r.method.estimator << std::right;
      if (r.ok()) {
        out << " alpha1 = " << std::setprecision(6) << r.alpha(0) << "  se = " << r.se(0) << "  " << ci
            << "% CI [" << r.alpha(0) - z * r.se(0) << ", " << r.alpha(0) + z * r.se(0) << "]"
            << std::setprecision(6) << '\n';
      } else {
        out << ' ' << to_string(r.status) << ": " << r.reason << '\n';
      }
    }
  }

  if (main.status == IvStatus::NoInstrumentsSelected) {
    err << "no instruments selected: the estimate is not available for this penalty\n";
    return kOk;
  }
  if (main.status == IvStatus::Failed) {
    err << "estimation failed: " << main.reason << '\n';
    return kNumeric;
  }
  return kOk;
}

// ---- shared design source for penalty / diagnose ---------------------------

struct Source {
  std::string data;
  DesignArgs design;
};

struct Loaded {
  IvDataset data;
  std::optional<mc::Replication> replication;
  std::optional<double> design_sigma_v;
};

Loaded load_source(const Source& s, std::uint64_t seed) {
  Loaded out;
  if (!s.data.empty()) {
    out.data = io::read_dataset_csv(s.data);
    return out;
  }
  DesignArgs d = s.design;
  d.reps = 1;
  const mc::DesignSampler sampler(d.to_design(seed));
  out.replication = sampler.draw(0);
  out.data = out.replication->data;
  out.design_sigma_v = sampler.sigma_v();
  return out;
}

// ---- penalty -------------------------------------------------------------

struct PenaltyArgs {
  Common common;
  Source source;
  double c = 1.1;
  double gamma = 0.0;
  long n_sim = 10000;
  std::optional<double> sigma_v;
};

int cmd_penalty(const PenaltyArgs& a, std::ostream& out) {
  const Loaded src = load_source(a.source, a.common.seed);
  const auto design = normalize_columns(src.data.F_raw);
  const Index n = design.F.rows(), p = design.F.cols();
  const double gamma = resolve_gamma(a.gamma, p);
  const auto q = simulate_score_quantiles(design.F, gamma, a.n_sim, a.common.seed, a.common.jobs);

  double sigma_v = 0.0;
  std::string sigma_source;
  if (a.sigma_v) {
    sigma_v = *a.sigma_v;
    sigma_source = "given";
  } else if (src.design_sigma_v) {
    sigma_v = *src.design_sigma_v;
    sigma_source = "design";
  } else {
    sigma_v = estimate_sigma_v_from_quantile(design.F, src.data.y2, a.c, q.lasso, 15, {}).sigma;
    sigma_source = "estimated";
  }
  if (!(sigma_v > 0)) throw UsageError("--sigma-v must be positive");
  const auto lasso = plugin_lambda_lasso_from_quantile(q.lasso, sigma_v, a.c, gamma, a.n_sim);
  const auto sqrt_lasso = plugin_lambda_sqrt_lasso_from_quantile(q.sqrt_lasso, a.c, gamma, a.n_sim);
  const double bound_q = score_quantile_bound(n, p, gamma);
  const double bound_log = score_log_bound(n, p, gamma);

  const std::vector<std::pair<std::string, double>> rows = {
      {"n", static_cast<double>(n)},
      {"p", static_cast<double>(p)},
      {"gamma", gamma},
      {"c", a.c},
      {"Lambda", q.lasso},
      {"Lambda_tilde", q.sqrt_lasso},
      {"bound_normal_quantile", bound_q},
      {"bound_log", bound_log},
      {"sigma_v", sigma_v},
      {"lambda_lasso", lasso.lambda},
      {"lambda_sqrt_lasso", sqrt_lasso.lambda},
  };
  if (a.common.format == "json") {
    ordered_json j;
    for (const auto& [k, v] : rows) j[k] = v;
    j["sigma_v_source"] = sigma_source;
    out << j.dump(2) << '\n';
  } else if (a.common.format == "csv") {
    out << "quantity,value\n";
    for (const auto& [k, v] : rows) out << k << ',' << io::format_full(v) << '\n';
  } else {
    out << "n = " << n << ", p = " << p << ", gamma = " << fmt4(gamma) << ", c = " << a.c << ", n_sim = " << a.n_sim
        << '\n';
    out << "Lambda        (LASSO score quantile)        " << std::setprecision(8) << q.lasso << '\n';
    out << "Lambda~       (sqrt-LASSO score quantile)   " << q.sqrt_lasso << '\n';
    out << "sqrt(n) Phi^-1(1 - gamma/(2p))              " << bound_q << '\n';
    out << "sqrt(2 n log(p/gamma))                      " << bound_log << '\n';
    out << "sigma_v (" << sigma_source << ")" << std::string(32 - sigma_source.size(), ' ') << sigma_v << '\n';
    out << "lambda LASSO       = c 2 sigma_v Lambda     " << lasso.lambda << '\n';
    out << "lambda sqrt-LASSO  = c Lambda~              " << sqrt_lasso.lambda << '\n';
  }
  return kOk;
}

// ---- diagnose ------------------------------------------------------------

struct DiagnoseArgs {
  Common common;
  Source source;
  Index m = 0;
  double C = 3.0;
  std::string mode = "auto";
  std::string support;
  Index re_samples = 64;
};

IndexSet parse_support(const std::string& spec, const IvDataset& data) {
  IndexSet out;
  std::istringstream is(spec);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    Index idx = -1;
    for (std::size_t j = 0; j < data.instrument_names.size(); ++j)
      if (data.instrument_names[j] == item) idx = static_cast<Index>(j);
    if (idx < 0) {
      try {
        std::size_t used = 0;
        const long v = std::stol(item, &used);
        if (used == item.size()) idx = v - 1;
      } catch (const std::exception&) {
      }
    }
    if (idx < 0 || idx >= data.p()) throw UsageError("--support: unknown instrument '" + item + "'");
    out.push_back(idx);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
  const Loaded src = load_source(a.source, a.common.seed);
  const auto design = normalize_columns(src.data.F_raw);
  const Index n = design.F.rows(), p = design.F.cols();
  if (a.m < 1 || a.m > p) throw UsageError("--m must lie in [1, p] with p = " + std::to_string(p));
  const Eigen::MatrixXd M = design.F.transpose() * design.F / static_cast<double>(n);

  SparseEigenMode mode = SparseEigenMode::Exact;
  if (a.mode == "greedy" || (a.mode == "auto" && binomial(p, a.m) > kMaxEnumeratedSubsets))
    mode = SparseEigenMode::Greedy;
  auto diag = sparse_eigenvalues(M, a.m, mode);

  IndexSet T;
  if (!a.support.empty()) {
    T = parse_support(a.support, src.data);
  } else if (src.replication) {
    for (Index j = 0; j < src.replication->truth.s; ++j) T.push_back(j);
  }
  if (!T.empty()) {
    const auto re = restricted_eigenvalue_estimate(M, T, a.C, a.re_samples, rng::derive_seed(a.common.seed, {7}));
    diag.kappa_sq_hat = re.kappa_sq_hat;
    diag.kappa_hat = re.kappa_hat;
    diag.kappa_C = re.kappa_C;
    diag.samples = re.samples;
  }

  if (a.common.format == "json") {
    ordered_json j;
    j["n"] = n;
    j["p"] = p;
    j["m"] = a.m;
    j["exact"] = diag.exact;
    j["phi_min"] = diag.phi_min;
    j["phi_max"] = diag.phi_max;
    j["phi_min_lower"] = diag.phi_min_lower;
    j["phi_max_upper"] = diag.phi_max_upper;
    if (diag.kappa_hat) {
      j["C"] = a.C;
      j["support_size"] = T.size();
      j["kappa_C_hat"] = *diag.kappa_hat;
      j["re_samples"] = diag.samples;
    }
    out << j.dump(2) << '\n';
  } else if (a.common.format == "csv") {
    out << "quantity,value\n";
    out << "m," << a.m << "\nexact," << (diag.exact ? 1 : 0) << '\n';
    out << "phi_min," << io::format_full(diag.phi_min) << "\nphi_max," << io::format_full(diag.phi_max) << '\n';
    out << "phi_min_lower," << io::format_full(diag.phi_min_lower) << "\nphi_max_upper,"
        << io::format_full(diag.phi_max_upper) << '\n';
    if (diag.kappa_hat) out << "kappa_C_hat," << io::format_full(*diag.kappa_hat) << '\n';
  } else {
    out << "n = " << n << ", p = " << p << ", m = " << a.m << ", mode = " << (diag.exact ? "exact" : "greedy")
        << '\n';
    out << std::setprecision(6);
    out << "phi_min(m) = " << diag.phi_min << "  (bracket [" << diag.phi_min_lower << ", " << diag.phi_min << "])\n";
    out << "phi_max(m) = " << diag.phi_max << "  (bracket [" << diag.phi_max << ", " << diag.phi_max_upper << "])\n";
    out << "exact: " << (diag.exact ? "yes" : "no") << '\n';
    if (diag.kappa_hat)
      out << "kappa_C (C = " << a.C << ", |T| = " << T.size() << ") <= " << *diag.kappa_hat << "  (estimate from "
          << diag.samples << " sign patterns)\n";
    else
      out << "kappa_C: not computed (pass --support)\n";
  }
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse-instrument IV estimation: simulation, fitting and penalty/design diagnostics", "sparseiv"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run Monte Carlo cells and write one result file per cell");
  add_common(simulate, sim.common, true);
  add_design(simulate, sim.design);
  simulate->add_option("--reps", sim.design.reps, "Replications per cell");
  simulate->add_option("--estimators", sim.estimators, "Comma-separated keys, 'table' or 'all'");
  simulate->add_flag("--sigma-known", sim.sigma_known, "Plug-in LASSO uses the true sigma_v");
  simulate->add_flag("--grid", sim.grid, "Run all designs x n {101,500} x corr {.3,.6} x F* {10,40,160}");
  simulate->add_flag("--audit", sim.audit, "Also write the replication-level audit CSV");
  simulate->add_flag("--export-data", sim.export_data, "Also write replication 0 as a dataset CSV");
  simulate->add_option("--n-sim", sim.n_sim, "Draws for the score quantiles");
  simulate->add_option("--c", sim.c, "Penalty constant c");
  simulate->add_option("--cv-folds", sim.cv_folds, "Folds for the -CV estimators");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the sparse-instrument IV estimator on a CSV dataset");
  add_common(fit_cmd, fit.common, false);
  fit_cmd->add_option("--data", fit.data, "CSV with y1, y2, w_* and z_* columns")->required();
  fit_cmd->add_option("--method", fit.method, "lasso, sqrt-lasso, post-lasso or post-sqrt-lasso")
      ->check(CLI::IsMember({"lasso", "sqrt-lasso", "post-lasso", "post-sqrt-lasso"}));
  fit_cmd->add_flag("--cv", fit.cv, "Choose the penalty by 10-fold cross-validation");
  fit_cmd->add_flag("--split", fit.split, "Split-sample estimator");
  fit_cmd->add_flag("--compare", fit.compare, "Add 2SLS and Fuller rows on the selected instruments");
  fit_cmd->add_option("--c", fit.c, "Penalty constant c");
  fit_cmd->add_option("--gamma", fit.gamma, "Penalty level gamma (default 1/p)");
  fit_cmd->add_option("--n-sim", fit.n_sim, "Draws for the score quantile");
  fit_cmd->add_option("--sigma-v", fit.sigma_v, "Known first-stage noise level");
  fit_cmd->add_option("--residual", fit.residual, "structural or instrument")
      ->check(CLI::IsMember({"structural", "instrument"}));
  fit_cmd->add_option("--level", fit.level, "Test level for the interval");

  PenaltyArgs pen;
  auto* penalty = app.add_subcommand("penalty", "Print score quantiles, analytic bounds and plug-in penalties");
  add_common(penalty, pen.common, true);
  penalty->add_option("--data", pen.source.data, "CSV dataset (otherwise a simulated design)");
  add_design(penalty, pen.source.design);
  penalty->add_option("--c", pen.c, "Penalty constant c");
  penalty->add_option("--gamma", pen.gamma, "Penalty level gamma (default 1/p)");
  penalty->add_option("--n-sim", pen.n_sim, "Draws for the score quantiles");
  penalty->add_option("--sigma-v", pen.sigma_v, "Noise level for the LASSO penalty");

  DiagnoseArgs dia;
  auto* diagnose = app.add_subcommand("diagnose", "Sparse and restricted eigenvalues of the instrument Gram matrix");
  add_common(diagnose, dia.common, false);
  diagnose->add_option("--data", dia.source.data, "CSV dataset (otherwise a simulated design)");
  add_design(diagnose, dia.source.design);
  diagnose->add_option("--m", dia.m, "Sparsity level")->required();
  diagnose->add_option("--C", dia.C, "Cone constant of the restricted eigenvalue");
  diagnose->add_option("--mode", dia.mode, "auto, exact or greedy")->check(CLI::IsMember({"auto", "exact", "greedy"}));
  diagnose->add_option("--support", dia.support, "Comma-separated instrument names or 1-based indices");
  diagnose->add_option("--re-samples", dia.re_samples, "Sign patterns for the restricted eigenvalue");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (!args.empty()) {
      if (auto* sub = app.get_subcommand_no_throw(args.front())) {
        std::vector<std::string> rest(args.begin() + 1, args.end());
        rest = merge_config(sub, rest);
        rest.insert(rest.begin(), args.front());
        args = std::move(rest);
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\nrun with --help for usage\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim, out, err);
    if (fit_cmd->parsed()) return cmd_fit(fit, out, err);
    if (penalty->parsed()) return cmd_penalty(pen, out);
    if (diagnose->parsed()) return cmd_diagnose(dia, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::DataContract ? kDataContract : kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  }
  return kUsage;
}

}  // namespace sparseiv::cli
