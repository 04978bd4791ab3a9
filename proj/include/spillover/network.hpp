#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace spillover {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One network channel: a dense n x n matrix of connection strengths with a
/// zero diagonal. Immutable after validation; safe for concurrent reads.
struct WeightsMatrix {
  int n = 0;
  Matrix values;
  std::string label;
  bool row_normalized = false;

  /// Checks zero diagonal, finiteness and (if flagged) row sums.
  /// Throws InvariantViolationError on failure.
  void validate() const;
};

/// Ordered collection of channels sharing a common cross-section size.
struct WeightsSet {
  std::vector<WeightsMatrix> matrices;
  int empty_n = 0;  // cross-section size when no channels are present

  int size() const { return static_cast<int>(matrices.size()); }
  int n() const { return matrices.empty() ? empty_n : matrices.front().n; }
  const Matrix& operator[](int q) const { return matrices[q].values; }

  double max_row_sum() const;  // max over channels of ||W_q||_inf
  double max_col_sum() const;  // max over channels of ||W_q||_1

  /// Throws InvariantViolationError if sizes differ or labels collide.
  void validate() const;
};

/// Units arrayed on a line, linked to the neighbours exactly `degree` steps
/// away, then row normalised. degree must lie in [1, n-1].
WeightsMatrix build_path_neighbors(int n, int degree);

/// Block membership matrix: (i,j) = 1 when i != j and both carry the same
/// group label, then row normalised. Singleton groups yield zero rows.
WeightsMatrix build_group_blocks(const std::vector<std::string>& labels);

/// Divides every row with a nonzero sum by that sum; zero rows pass through.
/// Rows whose entries cancel to a zero sum cannot be normalised and raise
/// NumericDegenerateError.
WeightsMatrix row_normalize(const WeightsMatrix& w);

struct ChannelDiagnostics {
  std::string label;
  double max_abs_row_sum = 0;  // ||W||_inf
  double max_abs_col_sum = 0;  // ||W||_1
  int zero_rows = 0;
};

struct DiagnosticsReport {
  std::vector<ChannelDiagnostics> channels;
  double tau = 0.0;
  double rho_l1_bound = 0.0;  // sum_q |rho_q| <= (1-tau)/max_q ||W_q||_inf
  std::vector<std::string> warnings;
};

/// Norm diagnostics plus the admissible-rho bound used throughout estimation.
/// Throws InvariantViolationError on a nonzero diagonal entry.
DiagnosticsReport validate_weights(const WeightsSet& set, double tau = 0.01);

/// Admissible-region radius alone: (1-tau)/max_q ||W_q||_inf.
double rho_l1_bound(const WeightsSet& set, double tau = 0.01);

/// Reads one weights matrix from CSV. Dense layout is n rows x n columns;
/// triplet layout has rows "i,j,value" with 1-based indices (a header line
/// "i,j,value" is accepted). `n` must be given for the triplet layout.
WeightsMatrix load_weights_csv(const std::string& path, int n = 0,
                               const std::string& label = "");

void save_weights_csv(const WeightsMatrix& w, const std::string& path);

/// Loads a set from a JSON manifest listing per-channel files, labels and
/// normalisation flags:
///   {"n": 25, "matrices": [{"file": "w1.csv", "label": "path1",
///                           "row_normalize": true}, ...]}
/// Relative file entries resolve against the manifest directory.
WeightsSet load_weights_manifest(const std::string& manifest_path);

}  // namespace spillover
