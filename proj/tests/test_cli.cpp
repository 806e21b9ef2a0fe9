#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sparseiv/cli.hpp"
#include "sparseiv/first_stage.hpp"
#include "sparseiv/io.hpp"
#include "sparseiv/iv.hpp"
#include "sparseiv/montecarlo.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace sparseiv;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "sparseiv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const char* base = std::getenv("SPARSEIV_TEST_TMP");
  const fs::path dir = fs::path(base ? base : fs::temp_directory_path().string()) / name;
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

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

// quantity,value rows as a map.
std::map<std::string, double> parse_pairs(const std::string& csv) {
  std::map<std::string, double> m;
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    const auto comma = line.find(',');
    m[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
  }
  return m;
}

const std::vector<std::string> kSmallCell = {"simulate", "--design", "cutoff", "--n", "60", "--p", "10", "--fstar", "40",
                                             "--reps", "4", "--n-sim", "1000", "--seed", "7"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("data contract: a missing column exits 3 and names it") {
  const auto dir = scratch("missing");
  write_text(dir / "d.csv", "y1,w_1,z_1\n1,1,0.5\n2,1,0.1\n3,1,0.7\n4,1,0.2\n");
  const auto r = run({"fit", "--data", (dir / "d.csv").string(), "--seed", "1"});
  CHECK(r.code == 3);
  CHECK(r.err.find("y2") != std::string::npos);
}

TEST_CASE("data contract: a non-numeric field exits 3") {
  const auto dir = scratch("bad_number");
  write_text(dir / "d.csv", "y1,y2,z_1\n1,2,0.5\n2,x,0.1\n3,1,0.7\n4,0,0.2\n");
  const auto r = run({"fit", "--data", (dir / "d.csv").string(), "--seed", "1"});
  CHECK(r.code == 3);
  CHECK(r.err.find("y2") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
  CHECK(run({"diagnose", "--m", "200", "--p", "100", "--seed", "1"}).code == 2);
  CHECK(run({"diagnose", "--m", "0", "--p", "20", "--seed", "1"}).code == 2);
  CHECK(run({"simulate", "--no-such-flag", "--seed", "1"}).code == 2);
  CHECK(run({"simulate", "--reps", "2"}).code == 2);  // --seed is required
  CHECK(run({"simulate", "--seed", "1", "--estimators", "nope"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"simulate", "--seed", "1", "--format", "xml"}).code == 2);
  CHECK(run({"simulate", "--seed", "1", "--corr", "1.5"}).code == 2);
}

TEST_CASE("help exits 0") {
  const auto r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("simulate") != std::string::npos);
}

TEST_CASE("simulate is byte-identical across runs and job counts") {
  const auto a = scratch("sim_a"), b = scratch("sim_b");
  const auto args = with(kSmallCell, {"--estimators", "oracle,2sls-all,iv-lasso,full-lasso", "--audit"});
  const auto ra = run(with(args, {"--output-dir", a.string(), "--jobs", "1"}));
  const auto rb = run(with(args, {"--output-dir", b.string(), "--jobs", "3"}));
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  CHECK(ra.out == rb.out);
  const std::string stem = "cutoff_n60_p10_fstar40_corr0.3_seed7";
  for (const char* ext : {".csv", ".json", "_audit.csv"}) {
    const auto fa = slurp(a / (stem + ext)), fb = slurp(b / (stem + ext));
    CHECK_FALSE(fa.empty());
    CHECK(fa == fb);
  }
}

TEST_CASE("simulate: CSV and JSON carry the same numbers") {
  const auto dir = scratch("sim_formats");
  const auto r = run(with(kSmallCell, {"--estimators", "oracle,2sls-all,full-all", "--output-dir", dir.string(),
                                       "--format", "csv"}));
  REQUIRE(r.code == 0);
  const std::string stem = "cutoff_n60_p10_fstar40_corr0.3_seed7";
  const auto csv = slurp(dir / (stem + ".csv"));
  CHECK(r.out == csv);
  const auto json = nlohmann::json::parse(slurp(dir / (stem + ".json")));
  CHECK(json["design"]["n"] == 60);
  CHECK(json["design"]["rng_seed"] == 7);

  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "estimator,rmse,med_bias,mad,rp05,n_zero,n_failed,n_used");
  std::size_t row = 0;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    REQUIRE(f.size() == 8);
    const auto& j = json["estimators"][row++];
    CHECK(j["estimator"] == f[0]);
    CHECK(j["rmse"].get<double>() == std::stod(f[1]));
    CHECK(j["med_bias"].get<double>() == std::stod(f[2]));
    CHECK(j["mad"].get<double>() == std::stod(f[3]));
    CHECK(j["rp05"].get<double>() == std::stod(f[4]));
    CHECK(j["n_used"].get<long>() == std::stol(f[7]));
  }
  CHECK(row == 3);
}

TEST_CASE("fit on an exported replication matches the in-memory estimate") {
  const auto dir = scratch("roundtrip");
  const auto s = run(with(kSmallCell, {"--estimators", "oracle", "--export-data", "--output-dir", dir.string()}));
  REQUIRE(s.code == 0);
  const auto data_path = dir / "cutoff_n60_p10_fstar40_corr0.3_seed7_rep0.csv";
  REQUIRE(fs::exists(data_path));

  const auto f = run({"fit", "--data", data_path.string(), "--method", "post-lasso", "--n-sim", "2000", "--c", "1.1",
                      "--seed", "11", "--format", "csv"});
  REQUIRE(f.code == 0);
  std::istringstream is(f.out);
  std::string header, line;
  std::getline(is, header);
  std::getline(is, line);
  std::vector<std::string> cells;
  std::stringstream ls(line);
  std::string cell;
  while (std::getline(ls, cell, ',')) cells.push_back(cell);
  REQUIRE(cells.size() >= 4);
  REQUIRE(cells[1] == "ok");

  mc::McDesign d;
  d.n = 60;
  d.p = 10;
  d.f_star = 40;
  d.n_reps = 4;
  d.rng_seed = 7;
  const auto rep = mc::gen_replication(d, 0);
  FirstStageConfig cfg;
  cfg.method = SparseMethod::PostLasso;
  cfg.n_sim = 2000;
  cfg.c = 1.1;
  const auto first = fit_first_stage(normalize_columns(rep.data.F_raw).F, rep.data.y2, cfg, 11);
  const auto e = fit_optimal_iv(rep.data, first.fit);
  REQUIRE(e.ok());
  CHECK(std::stod(cells[2]) == doctest::Approx(e.alpha(0)).epsilon(1e-12));
  CHECK(std::stod(cells[3]) == doctest::Approx(e.se(0)).epsilon(1e-12));
}

TEST_CASE("penalty: doubling sigma_v doubles the LASSO penalty only") {
  const std::vector<std::string> base = {"penalty", "--design", "cutoff", "--n", "100", "--p", "20",
                                         "--n-sim", "2000", "--seed", "3", "--format", "csv"};
  const auto one = run(with(base, {"--sigma-v", "1"}));
  const auto two = run(with(base, {"--sigma-v", "2"}));
  REQUIRE(one.code == 0);
  REQUIRE(two.code == 0);
  const auto a = parse_pairs(one.out), b = parse_pairs(two.out);
  CHECK(b.at("lambda_lasso") == doctest::Approx(2 * a.at("lambda_lasso")).epsilon(1e-14));
  CHECK(b.at("lambda_sqrt_lasso") == a.at("lambda_sqrt_lasso"));
  CHECK(a.at("bound_normal_quantile") <= a.at("bound_log"));
  CHECK(a.at("lambda_lasso") == doctest::Approx(2 * 1.1 * a.at("Lambda")).epsilon(1e-14));
}

TEST_CASE("diagnose: orthogonal instruments have unit sparse eigenvalues") {
  const auto dir = scratch("diagnose");
  // Columns of a 4x4 Hadamard matrix (the constant one left out).
  write_text(dir / "h.csv",
             "y1,y2,z_a,z_b,z_c\n"
             "1,1,1,1,1\n"
             "2,0,-1,1,-1\n"
             "0,1,1,-1,-1\n"
             "1,2,-1,-1,1\n");
  const auto r = run({"diagnose", "--data", (dir / "h.csv").string(), "--m", "2", "--support", "z_a,3", "--seed",
                      "1", "--format", "csv"});
  REQUIRE(r.code == 0);
  const auto m = parse_pairs(r.out);
  CHECK(m.at("phi_min") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.at("phi_max") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.at("exact") == 1.0);
  CHECK(m.at("kappa_C_hat") == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(run({"diagnose", "--data", (dir / "h.csv").string(), "--m", "2", "--support", "z_q", "--seed", "1"}).code == 2);
}

TEST_CASE("config file values apply unless overridden on the command line") {
  const auto dir = scratch("config");
  write_text(dir / "run.conf",
             "# small cell\n"
             "design = cutoff\n"
             "n = 60\n"
             "p = 10\n"
             "reps = 2\n"
             "n-sim = 1000\n"
             "estimators = oracle\n"
             "audit = true\n");
  const auto r = run({"simulate", "--config", (dir / "run.conf").string(), "--reps", "3", "--seed", "5",
                      "--output-dir", dir.string(), "--format", "json"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["design"]["n"] == 60);
  CHECK(j["design"]["p"] == 10);
  CHECK(j["design"]["n_reps"] == 3);
  CHECK(j["estimators"].size() == 1);
  CHECK(fs::exists(dir / "cutoff_n60_p10_fstar160_corr0.3_seed5_audit.csv"));

  write_text(dir / "bad.conf", "bogus = 1\n");
  CHECK(run({"simulate", "--config", (dir / "bad.conf").string(), "--seed", "5"}).code == 2);
}

TEST_CASE("fit: JSON output and the comparison rows") {
  const auto dir = scratch("fit_json");
  REQUIRE(run(with(kSmallCell, {"--estimators", "oracle", "--export-data", "--output-dir", dir.string()})).code == 0);
  const auto data_path = dir / "cutoff_n60_p10_fstar40_corr0.3_seed7_rep0.csv";
  const auto r = run({"fit", "--data", data_path.string(), "--compare", "--n-sim", "1000", "--seed", "2", "--format",
                      "json"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["n"] == 60);
  CHECK(j["p"] == 10);
  REQUIRE(j["estimates"].size() == 3);
  CHECK(j["estimates"][1]["estimator"] == "2sls");
  CHECK(j["estimates"][2]["estimator"] == "fuller");
  const double lo = j["estimates"][0]["ci_low"], hi = j["estimates"][0]["ci_high"], a = j["estimates"][0]["alpha1"];
  CHECK(lo < a);
  CHECK(a < hi);
}
