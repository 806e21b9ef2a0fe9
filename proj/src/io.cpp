#include "sparseiv/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace sparseiv::io {

std::string format_full(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

double parse_number(const std::string& field, const std::string& column, long line) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (field.empty() || res.ec != std::errc() || res.ptr != last)
    throw Error(ErrorCode::DataContract,
                "line " + std::to_string(line) + ", column '" + column + "': cannot parse '" + field + "'");
  return v;
}

}  // namespace

IvDataset read_dataset_csv(std::istream& in) {
  std::string header_line;
  if (!std::getline(in, header_line)) throw Error(ErrorCode::DataContract, "empty input: missing header row");
  if (header_line.size() >= 3 && header_line.compare(0, 3, "\xEF\xBB\xBF") == 0) header_line.erase(0, 3);
  const auto header = split(header_line);

  long y1_col = -1, y2_col = -1;
  std::vector<long> w_cols, z_cols;
  std::vector<std::string> w_names, z_names;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const auto& h = header[j];
    const long col = static_cast<long>(j);
    if (h == "y1") {
      if (y1_col >= 0) throw Error(ErrorCode::DataContract, "duplicate column 'y1'");
      y1_col = col;
    } else if (h == "y2") {
      if (y2_col >= 0) throw Error(ErrorCode::DataContract, "duplicate column 'y2'");
      y2_col = col;
    } else if (starts_with(h, "w_")) {
      w_cols.push_back(col);
      w_names.push_back(h);
    } else if (starts_with(h, "z_")) {
      z_cols.push_back(col);
      z_names.push_back(h);
    }
  }
  if (y1_col < 0) throw Error(ErrorCode::DataContract, "missing required column 'y1'");
  if (y2_col < 0) throw Error(ErrorCode::DataContract, "missing required column 'y2'");
  if (z_cols.empty()) throw Error(ErrorCode::DataContract, "no instrument columns (prefix 'z_')");

  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size())
      throw Error(ErrorCode::DataContract, "line " + std::to_string(line_no) + ": expected " +
                                               std::to_string(header.size()) + " fields, found " +
                                               std::to_string(fields.size()));
    std::vector<double> row;
    row.reserve(2 + w_cols.size() + z_cols.size());
    auto take = [&](long col) {
      row.push_back(parse_number(fields[static_cast<std::size_t>(col)], header[static_cast<std::size_t>(col)], line_no));
    };
    take(y1_col);
    take(y2_col);
    for (long c : w_cols) take(c);
    for (long c : z_cols) take(c);
    rows.push_back(std::move(row));
  }

  const auto n = static_cast<Index>(rows.size());
  const auto kw = static_cast<Index>(w_cols.size());
  const auto p = static_cast<Index>(z_cols.size());
  Eigen::VectorXd y1(n), y2(n);
  Eigen::MatrixXd W(n, kw), F(n, p);
  for (Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    y1(i) = r[0];
    y2(i) = r[1];
    for (Index j = 0; j < kw; ++j) W(i, j) = r[static_cast<std::size_t>(2 + j)];
    for (Index j = 0; j < p; ++j) F(i, j) = r[static_cast<std::size_t>(2 + kw + j)];
  }
  for (Index j = 0; j < p; ++j)
    if (F.col(j).squaredNorm() == 0.0)
      throw Error(ErrorCode::DataContract, "instrument column '" + z_names[static_cast<std::size_t>(j)] + "' is identically zero");

  IvDataset data;
  try {
    data = build_dataset(std::move(y1), std::move(y2), std::move(W), std::move(F));
  } catch (const Error& e) {
    throw Error(ErrorCode::DataContract, e.what());
  }
  data.instrument_names = std::move(z_names);
  data.control_names = std::move(w_names);
  return data;
}

IvDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::DataContract, "cannot open '" + path + "'");
  return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const IvDataset& data) {
  out << "y1,y2";
  for (const auto& w : data.control_names) out << ',' << w;
  for (const auto& z : data.instrument_names) out << ',' << z;
  out << '\n';
  for (Index i = 0; i < data.n(); ++i) {
    out << format_full(data.y1(i)) << ',' << format_full(data.y2(i));
    for (Index j = 0; j < data.k_w(); ++j) out << ',' << format_full(data.W(i, j));
    for (Index j = 0; j < data.p(); ++j) out << ',' << format_full(data.F_raw(i, j));
    out << '\n';
  }
}

void write_mc_csv(std::ostream& out, const mc::McResult& result) {
  out << "estimator,rmse,med_bias,mad,rp05,n_zero,n_failed,n_used\n";
  for (std::size_t k = 0; k < result.estimators.size(); ++k) {
    const auto& m = result.metrics[k];
    out << mc::estimator_label(result.estimators[k], result.design.p) << ',' << format_full(m.rmse) << ','
        << format_full(m.med_bias) << ',' << format_full(m.mad) << ',' << format_full(m.rp05) << ','
        << m.n_zero_selected << ',' << m.n_failed << ',' << m.n_used << '\n';
  }
}

namespace {

// JSON has no NaN; metrics of an estimator with no usable replication become null.
nlohmann::ordered_json number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

}  // namespace

void write_mc_json(std::ostream& out, const mc::McResult& result) {
  using nlohmann::ordered_json;
  const auto& d = result.design;
  ordered_json j;
  j["design"] = {{"design", mc::to_string(d.design)}, {"n", d.n},
                 {"p", d.p},
                 {"corr_ev", d.corr_ev},
                 {"f_star", d.f_star},
                 {"sigma_e2", d.sigma_e2},
                 {"sigma_z2", d.sigma_z2},
                 {"rho_z", d.rho_z},
                 {"alpha_true", d.alpha_true},
                 {"n_reps", d.n_reps},
                 {"rng_seed", d.rng_seed}};
  ordered_json rows = ordered_json::array();
  for (std::size_t k = 0; k < result.estimators.size(); ++k) {
    const auto& m = result.metrics[k];
    rows.push_back({{"estimator", mc::estimator_label(result.estimators[k], d.p)},
                    {"rmse", number(m.rmse)},
                    {"med_bias", number(m.med_bias)},
                    {"mad", number(m.mad)},
                    {"mean_abs_dev", number(m.mean_abs_dev)},
                    {"rp05", number(m.rp05)},
                    {"n_zero", m.n_zero_selected},
                    {"n_failed", m.n_failed},
                    {"n_used", m.n_used}});
  }
  j["estimators"] = std::move(rows);
  out << j.dump(2) << '\n';
}

void write_mc_table(std::ostream& out, const mc::McResult& result) {
  const auto& d = result.design;
  out << "design=" << mc::to_string(d.design) << " n=" << d.n << " p=" << d.p << " F*=" << d.f_star
      << " corr(e,v)=" << d.corr_ev << " reps=" << d.n_reps << " seed=" << d.rng_seed << '\n';
  out << std::left << std::setw(18) << "estimator" << std::right << std::setw(11) << "RMSE" << std::setw(11)
      << "Med.Bias" << std::setw(11) << "MAD" << std::setw(11) << "rp(.05)" << std::setw(8) << "zero"
      << std::setw(8) << "failed" << std::setw(8) << "used" << '\n';
  const auto old_flags = out.flags();
  const auto old_precision = out.precision();
  out << std::setprecision(4);
  for (std::size_t k = 0; k < result.estimators.size(); ++k) {
    const auto& m = result.metrics[k];
    out << std::left << std::setw(18) << mc::estimator_label(result.estimators[k], d.p) << std::right
        << std::setw(11) << m.rmse << std::setw(11) << m.med_bias << std::setw(11) << m.mad << std::setw(11)
        << m.rp05 << std::setw(8) << m.n_zero_selected << std::setw(8) << m.n_failed << std::setw(8) << m.n_used
        << '\n';
  }
  out.flags(old_flags);
  out.precision(old_precision);
  out << "MAD is the median absolute deviation around the median estimate.\n";
}

void write_audit_csv(std::ostream& out, const mc::McResult& result) {
  out << "rep,estimator,status,alpha1,se1,selected,reason\n";
  for (const auto& r : result.records) {
    std::string reason = r.reason;
    for (char& ch : reason)
      if (ch == ',' || ch == '\n') ch = ';';
    out << r.rep << ',' << mc::estimator_label(r.estimator, result.design.p) << ',' << to_string(r.status) << ','
        << format_full(r.alpha1) << ',' << format_full(r.se1) << ',' << r.selected << ',' << reason << '\n';
  }
}

}  // namespace sparseiv::io
