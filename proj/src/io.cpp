#include "spillover/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spillover/errors.hpp"

namespace spillover {

using nlohmann::json;

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << contents;
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void save_panel_csv(const PanelData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.precision(17);
  const int Kp = data.Kstar();
  out << "unit_id,time_id,y";
  for (int k = 0; k < Kp; ++k) out << ",x" << (k + 1);
  out << '\n';
  const bool dynamic = data.own_lag || !data.lag_channels.empty();
  if (dynamic) {
    for (int i = 0; i < data.n; ++i) {
      out << (i + 1) << ",0," << data.Y_lag(i, 0);
      for (int k = 0; k < Kp; ++k) out << ",0";
      out << '\n';
    }
  }
  for (int t = 0; t < data.T; ++t) {
    for (int i = 0; i < data.n; ++i) {
      out << (i + 1) << ',' << (t + 1) << ',' << data.Y(i, t);
      for (int k = 0; k < Kp; ++k) out << ',' << data.X_star[k](i, t);
      out << '\n';
    }
  }
}

PanelData load_panel_csv(const std::string& path, const WeightsSet& weights,
                         const PanelLayout& layout) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  size_t line_no = 0;

  if (!std::getline(in, line)) throw IngestionError(path + ": empty file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 3 || header[0] != "unit_id" || header[1] != "time_id" || header[2] != "y") {
    throw IngestionError(path + ": line 1: header must start with unit_id,time_id,y");
  }
  const int n_primitives = static_cast<int>(header.size()) - 3;

  struct Row {
    int unit;
    int time;
    std::vector<double> vals;  // y then covariates
  };
  std::vector<Row> rows;
  std::map<int, int> unit_index, time_index;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Row row;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t pos = 0;
        const double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument("trailing");
        if (col == 0) {
          row.unit = static_cast<int>(v);
        } else if (col == 1) {
          row.time = static_cast<int>(v);
        } else {
          row.vals.push_back(v);
        }
      } catch (const std::exception&) {
        throw IngestionError(path + ": line " + std::to_string(line_no) + ": cannot parse '" +
                             cell + "'");
      }
      ++col;
    }
    if (col != static_cast<int>(header.size())) {
      throw IngestionError(path + ": line " + std::to_string(line_no) + ": expected " +
                           std::to_string(header.size()) + " columns, found " + std::to_string(col));
    }
    unit_index.emplace(row.unit, 0);
    time_index.emplace(row.time, 0);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IngestionError(path + ": no data rows");

  int idx = 0;
  for (auto& [unit, i] : unit_index) i = idx++;
  idx = 0;
  for (auto& [time, i] : time_index) i = idx++;
  const int n = static_cast<int>(unit_index.size());
  const int n_periods = static_cast<int>(time_index.size());
  if (rows.size() != static_cast<size_t>(n) * n_periods) {
    throw IngestionError(path + ": panel is not a complete unit x time rectangle");
  }
  if (weights.size() > 0 && weights.n() != n) {
    throw IngestionError(path + ": panel has n=" + std::to_string(n) + " but weights have n=" +
                         std::to_string(weights.n()));
  }

  Matrix Y_all(n, n_periods);
  std::vector<Matrix> X_all(n_primitives, Matrix(n, n_periods));
  std::vector<char> seen(static_cast<size_t>(n) * n_periods, 0);
  for (const auto& row : rows) {
    const int i = unit_index[row.unit];
    const int t = time_index[row.time];
    auto& flag = seen[static_cast<size_t>(i) * n_periods + t];
    if (flag) throw IngestionError(path + ": duplicate (unit,time) pair");
    flag = 1;
    Y_all(i, t) = row.vals[0];
    for (int k = 0; k < n_primitives; ++k) X_all[k](i, t) = row.vals[k + 1];
  }

  const bool dynamic = layout.own_lag || !layout.lag_channels.empty();
  PanelData data;
  data.n = n;
  data.own_lag = layout.own_lag;
  data.lag_channels = layout.lag_channels;
  if (dynamic) {
    if (n_periods < 2) {
      throw IngestionError(path + ": dynamic layout needs at least two periods");
    }
    data.T = n_periods - 1;
    data.Y = Y_all.rightCols(data.T);
    data.Y_lag = Y_all.leftCols(data.T);
    for (int k = 0; k < n_primitives; ++k) data.X_star.push_back(X_all[k].rightCols(data.T));
  } else {
    data.T = n_periods;
    data.Y = Y_all;
    data.X_star = X_all;
  }
  for (int q : layout.interact_channels) {
    if (q < 0 || q >= weights.size()) {
      throw IngestionError(path + ": interaction channel out of range");
    }
    if (n_primitives == 0) {
      throw IngestionError(path + ": interactions need at least one primitive covariate");
    }
    data.X_star.push_back(weights[q] * data.X_star[0]);
  }
  assemble_derived(data, weights);
  return data;
}

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void save_truth_json(const SimulatedTruth& truth, const SimulationDesign& design,
                     const std::string& path) {
  json j;
  j["seed"] = design.seed;
  j["n"] = design.n;
  j["T"] = design.T;
  j["R0"] = design.R0;
  j["sigma0_sq"] = design.sigma0_sq;
  j["rng"] = SplitMix64::name();
  j["theta0"]["rho"] = std::vector<double>(design.theta0.rho.begin(), design.theta0.rho.end());
  j["theta0"]["delta"] = std::vector<double>(design.theta0.delta.begin(), design.theta0.delta.end());
  j["theta0"]["phi"] = std::vector<double>(design.theta0.phi.begin(), design.theta0.phi.end());
  j["Lambda0"] = matrix_to_json(truth.Lambda0);
  j["F0"] = matrix_to_json(truth.F0);
  write_text_file(path, j.dump(2) + "\n");
}

namespace {

json report_to_json_obj(const EstimationReport& r) {
  json j;
  j["n"] = r.n;
  j["T"] = r.T;
  j["Q"] = r.Q;
  j["P"] = r.P;
  j["R_max"] = r.R_max;
  j["R_selected"] = r.R_selected;
  j["R_by_variant"] = r.R_by_variant;
  j["gamma_rho_bar"] = r.gamma_rho_bar;
  j["gamma_beta_bar"] = r.gamma_beta_bar;
  j["gamma_rho"] = r.gamma_rho;
  j["gamma_beta"] = r.gamma_beta;
  j["sigma2"] = r.sigma2;
  j["m3"] = r.m3;
  j["m4"] = r.m4;
  j["d_condition"] = r.d_condition;
  j["theta_tilde"] = r.theta_tilde;
  j["warnings"] = r.warnings;
  j["coefficients"] = json::array();
  for (const auto& c : r.coefficients) {
    j["coefficients"].push_back({{"name", c.name},
                                 {"estimate", c.estimate},
                                 {"corrected", c.corrected},
                                 {"se", c.se},
                                 {"tstat", c.tstat},
                                 {"bias", c.bias},
                                 {"selected", c.selected}});
  }
  j["gamma_trace"] = json::array();
  for (const auto& row : r.gamma_trace) {
    j["gamma_trace"].push_back({{"gamma_rho", row.gamma_rho},
                                {"gamma_beta", row.gamma_beta},
                                {"sigma2", row.sigma2},
                                {"support_rho", row.support_rho},
                                {"support_beta", row.support_beta},
                                {"ic", row.ic}});
  }
  j["factor_trace"] = json::array();
  for (const auto& row : r.factor_trace) {
    j["factor_trace"].push_back({{"variant", row.variant}, {"R", row.R}, {"ic", row.ic}});
  }
  return j;
}

}  // namespace

std::string report_to_json(const EstimationReport& report) {
  return report_to_json_obj(report).dump(2) + "\n";
}

EstimationReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IngestionError(std::string("report JSON: ") + e.what());
  }
  EstimationReport r;
  r.n = j.at("n");
  r.T = j.at("T");
  r.Q = j.at("Q");
  r.P = j.at("P");
  r.R_max = j.at("R_max");
  r.R_selected = j.at("R_selected");
  r.R_by_variant = j.at("R_by_variant").get<std::map<std::string, int>>();
  r.gamma_rho_bar = j.at("gamma_rho_bar");
  r.gamma_beta_bar = j.at("gamma_beta_bar");
  r.gamma_rho = j.at("gamma_rho");
  r.gamma_beta = j.at("gamma_beta");
  r.sigma2 = j.at("sigma2");
  r.m3 = j.at("m3");
  r.m4 = j.at("m4");
  r.d_condition = j.at("d_condition");
  r.theta_tilde = j.at("theta_tilde").get<std::vector<double>>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& c : j.at("coefficients")) {
    CoefficientReport cr;
    cr.name = c.at("name");
    cr.estimate = c.at("estimate");
    cr.corrected = c.at("corrected");
    cr.se = c.at("se");
    cr.tstat = c.at("tstat");
    cr.bias = c.at("bias");
    cr.selected = c.at("selected");
    r.coefficients.push_back(std::move(cr));
  }
  for (const auto& row : j.at("gamma_trace")) {
    r.gamma_trace.push_back({row.at("gamma_rho"), row.at("gamma_beta"), row.at("sigma2"),
                             row.at("support_rho"), row.at("support_beta"), row.at("ic")});
  }
  for (const auto& row : j.at("factor_trace")) {
    r.factor_trace.push_back({row.at("variant"), row.at("R"), row.at("ic")});
  }
  return r;
}

void save_report_json(const EstimationReport& report, const std::string& path) {
  write_text_file(path, report_to_json(report));
}

EstimationReport load_report_json(const std::string& path) {
  return report_from_json(read_text_file(path));
}

std::string report_text(const EstimationReport& r) {
  std::ostringstream os;
  os << "Estimation report  (n=" << r.n << ", T=" << r.T << ", Q=" << r.Q << ", P=" << r.P
     << ")\n";
  os << "Selected R = " << r.R_selected;
  if (!r.R_by_variant.empty()) {
    os << "  [";
    bool first = true;
    for (const auto& [name, R] : r.R_by_variant) {
      if (!first) os << ", ";
      os << name << "=" << R;
      first = false;
    }
    os << "]";
  }
  os << "\ngamma = (" << r.gamma_rho << ", " << r.gamma_beta << ")  sigma2 = " << r.sigma2
     << "\n\n";
  os << std::left << std::setw(12) << "coefficient" << std::right << std::setw(12) << "estimate"
     << std::setw(12) << "corrected" << std::setw(12) << "se" << std::setw(12) << "t-stat"
     << '\n';
  for (const auto& c : r.coefficients) {
    if (!c.selected) continue;
    os << std::left << std::setw(12) << c.name << std::right << std::fixed
       << std::setprecision(4) << std::setw(12) << c.estimate << std::setw(12) << c.corrected
       << std::setw(12) << c.se << std::setw(12) << c.tstat << '\n';
    os.unsetf(std::ios_base::floatfield);
  }
  const int dropped =
      static_cast<int>(std::count_if(r.coefficients.begin(), r.coefficients.end(),
                                     [](const CoefficientReport& c) { return !c.selected; }));
  os << "\n(" << dropped << " coefficient(s) shrunk to exactly zero)\n";
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  return os.str();
}

void save_gamma_trace_csv(const EstimationReport& report, const std::string& path) {
  std::ostringstream os;
  os << "gamma_rho,gamma_beta,sigma2,support_rho,support_beta,ic_star\n";
  os.precision(12);
  for (const auto& row : report.gamma_trace) {
    os << row.gamma_rho << ',' << row.gamma_beta << ',' << row.sigma2 << ',' << row.support_rho
       << ',' << row.support_beta << ',' << row.ic << '\n';
  }
  write_text_file(path, os.str());
}

void save_factor_trace_csv(const EstimationReport& report, const std::string& path) {
  std::ostringstream os;
  os << "R,variant,ic\n";
  os.precision(12);
  for (const auto& row : report.factor_trace) {
    os << row.R << ',' << row.variant << ',' << row.ic << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace spillover
