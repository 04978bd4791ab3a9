#include "spillover/network.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spillover/errors.hpp"

namespace spillover {

namespace {

constexpr double kRowSumTol = 1e-12;

}  // namespace

void WeightsMatrix::validate() const {
  if (values.rows() != n || values.cols() != n) {
    throw InvariantViolationError("weights matrix '" + label + "' is not n x n");
  }
  if (!values.allFinite()) {
    throw InvariantViolationError("weights matrix '" + label + "' has non-finite entries");
  }
  for (int i = 0; i < n; ++i) {
    if (values(i, i) != 0.0) {
      throw InvariantViolationError("weights matrix '" + label + "' has nonzero diagonal at (" +
                                    std::to_string(i + 1) + "," + std::to_string(i + 1) + ")");
    }
  }
  if (row_normalized) {
    for (int i = 0; i < n; ++i) {
      const double s = values.row(i).sum();
      const bool empty = (values.row(i).cwiseAbs().maxCoeff() == 0.0);
      if (!empty && std::abs(s - 1.0) > kRowSumTol) {
        throw InvariantViolationError("weights matrix '" + label + "' flagged row-normalized but row " +
                                      std::to_string(i + 1) + " sums to " + std::to_string(s));
      }
    }
  }
}

double WeightsSet::max_row_sum() const {
  double m = 0;
  for (const auto& w : matrices) m = std::max(m, w.values.cwiseAbs().rowwise().sum().maxCoeff());
  return m;
}

double WeightsSet::max_col_sum() const {
  double m = 0;
  for (const auto& w : matrices) m = std::max(m, w.values.cwiseAbs().colwise().sum().maxCoeff());
  return m;
}

void WeightsSet::validate() const {
  if (matrices.empty()) return;
  const int n0 = matrices.front().n;
  std::set<std::string> labels;
  for (const auto& w : matrices) {
    w.validate();
    if (w.n != n0) throw InvariantViolationError("weights set members disagree on n");
    if (!labels.insert(w.label).second) {
      throw InvariantViolationError("duplicate weights label '" + w.label + "'");
    }
  }
}

WeightsMatrix build_path_neighbors(int n, int degree) {
  if (n < 2) throw InvalidArgumentError("path network needs n >= 2");
  if (degree < 1 || degree > n - 1) {
    throw InvalidArgumentError("path degree " + std::to_string(degree) +
                               " out of range [1, " + std::to_string(n - 1) + "]");
  }
  WeightsMatrix w;
  w.n = n;
  w.label = "path" + std::to_string(degree);
  w.values = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (i - degree >= 0) w.values(i, i - degree) = 1.0;
    if (i + degree < n) w.values(i, i + degree) = 1.0;
  }
  return row_normalize(w);
}

WeightsMatrix build_group_blocks(const std::vector<std::string>& labels) {
  if (labels.empty()) throw InvalidArgumentError("group labels are empty");
  const int n = static_cast<int>(labels.size());
  WeightsMatrix w;
  w.n = n;
  w.label = "groups";
  w.values = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j && labels[i] == labels[j]) w.values(i, j) = 1.0;
    }
  }
  return row_normalize(w);
}

WeightsMatrix row_normalize(const WeightsMatrix& w) {
  WeightsMatrix out = w;
  for (int i = 0; i < out.n; ++i) {
    const double s = out.values.row(i).sum();
    const bool empty = (out.values.row(i).cwiseAbs().maxCoeff() == 0.0);
    if (empty) continue;
    if (s == 0.0) {
      throw NumericDegenerateError("row " + std::to_string(i + 1) +
                                   " has nonzero entries summing to zero; cannot row-normalize");
    }
    out.values.row(i) /= s;
  }
  out.row_normalized = true;
  return out;
}

DiagnosticsReport validate_weights(const WeightsSet& set, double tau) {
  if (tau <= 0.0 || tau >= 1.0) throw InvalidArgumentError("tau must lie in (0,1)");
  set.validate();
  DiagnosticsReport rep;
  rep.tau = tau;
  double max_inf = 0;
  for (const auto& w : set.matrices) {
    ChannelDiagnostics d;
    d.label = w.label;
    d.max_abs_row_sum = w.values.cwiseAbs().rowwise().sum().maxCoeff();
    d.max_abs_col_sum = w.values.cwiseAbs().colwise().sum().maxCoeff();
    for (int i = 0; i < w.n; ++i) {
      if (w.values.row(i).cwiseAbs().maxCoeff() == 0.0) ++d.zero_rows;
    }
    if (d.zero_rows > 0) {
      rep.warnings.push_back("channel '" + w.label + "' has " + std::to_string(d.zero_rows) +
                             " isolated unit(s) (zero rows)");
    }
    max_inf = std::max(max_inf, d.max_abs_row_sum);
    rep.channels.push_back(std::move(d));
  }
  rep.rho_l1_bound = max_inf > 0 ? (1.0 - tau) / max_inf : 0.0;
  return rep;
}

double rho_l1_bound(const WeightsSet& set, double tau) {
  double max_inf = 0;
  for (const auto& w : set.matrices) {
    max_inf = std::max(max_inf, w.values.cwiseAbs().rowwise().sum().maxCoeff());
  }
  return max_inf > 0 ? (1.0 - tau) / max_inf : 0.0;
}

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_double(const std::string& s, const std::string& path, size_t line_no) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw IngestionError(path + ": line " + std::to_string(line_no) + ": cannot parse '" + s + "'");
  }
}

}  // namespace

WeightsMatrix load_weights_csv(const std::string& path, int n, const std::string& label) {
  auto rows = read_csv_rows(path);
  if (rows.empty()) throw IngestionError(path + ": empty weights file");

  WeightsMatrix w;
  w.label = label.empty() ? std::filesystem::path(path).stem().string() : label;

  size_t first = 0;
  bool triplet = rows[0].size() == 3;
  if (triplet && rows[0][0] == "i") first = 1;  // header "i,j,value"
  // A 3x3 dense matrix also has 3 columns; treat as dense when square and no n given.
  if (triplet && n == 0 && rows.size() == rows[0].size() && rows[0][0] != "i") triplet = false;

  if (triplet) {
    if (n <= 0) throw IngestionError(path + ": triplet layout requires the cross-section size n");
    w.n = n;
    w.values = Matrix::Zero(n, n);
    for (size_t r = first; r < rows.size(); ++r) {
      if (rows[r].size() != 3) {
        throw IngestionError(path + ": line " + std::to_string(r + 1) + ": expected 3 columns");
      }
      const int i = static_cast<int>(parse_double(rows[r][0], path, r + 1));
      const int j = static_cast<int>(parse_double(rows[r][1], path, r + 1));
      if (i < 1 || i > n || j < 1 || j > n) {
        throw IngestionError(path + ": line " + std::to_string(r + 1) + ": index out of range");
      }
      w.values(i - 1, j - 1) = parse_double(rows[r][2], path, r + 1);
    }
  } else {
    const int nn = static_cast<int>(rows.size());
    if (n > 0 && n != nn) {
      throw IngestionError(path + ": dense matrix has " + std::to_string(nn) +
                           " rows, expected " + std::to_string(n));
    }
    w.n = nn;
    w.values = Matrix::Zero(nn, nn);
    for (int i = 0; i < nn; ++i) {
      if (static_cast<int>(rows[i].size()) != nn) {
        throw IngestionError(path + ": line " + std::to_string(i + 1) + ": expected " +
                             std::to_string(nn) + " columns, found " + std::to_string(rows[i].size()));
      }
      for (int j = 0; j < nn; ++j) w.values(i, j) = parse_double(rows[i][j], path, i + 1);
    }
  }
  return w;
}

void save_weights_csv(const WeightsMatrix& w, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.precision(17);
  for (int i = 0; i < w.n; ++i) {
    for (int j = 0; j < w.n; ++j) {
      out << w.values(i, j);
      out << (j + 1 < w.n ? ',' : '\n');
    }
  }
}

WeightsSet load_weights_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open '" + manifest_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(manifest_path + ": " + e.what());
  }
  const int n = j.value("n", 0);
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  WeightsSet set;
  if (!j.contains("matrices") || !j["matrices"].is_array() || j["matrices"].empty()) {
    throw IngestionError(manifest_path + ": manifest lists no matrices");
  }
  for (const auto& entry : j["matrices"]) {
    const std::string file = entry.at("file").get<std::string>();
    auto path = std::filesystem::path(file);
    if (path.is_relative()) path = dir / path;
    WeightsMatrix w = load_weights_csv(path.string(), n, entry.value("label", ""));
    if (entry.value("row_normalize", false)) {
      w = row_normalize(w);
    } else {
      w.row_normalized = entry.value("row_normalized", false);
    }
    set.matrices.push_back(std::move(w));
  }
  set.validate();
  return set;
}

}  // namespace spillover
