#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spillover/network.hpp"

namespace spillover {

/// Coefficients theta = (rho, delta, phi).
///
/// rho    endogenous spillovers, one per channel (length Q);
/// delta  coefficients on the exogenous block, primitives and
///        weights-interacted primitives alike (length K*);
/// phi    dynamic coefficients: own lag first (when present), then one per
///        lagged spillover channel.
struct ParamVector {
  Vector rho;
  Vector delta;
  Vector phi;

  int Q() const { return static_cast<int>(rho.size()); }
  int Kstar() const { return static_cast<int>(delta.size()); }
  int K() const { return Kstar() + static_cast<int>(phi.size()); }
  int P() const { return Q() + K(); }

  Vector beta() const;     // (delta, phi)
  Vector stacked() const;  // (rho, delta, phi)
  static ParamVector from_stacked(const Vector& v, int Q, int Kstar);

  static ParamVector zeros(int Q, int Kstar, int nphi);

  /// true exactly where the coefficient is nonzero.
  std::vector<bool> support_mask() const;
  int support_size() const;
};

/// Observed panel plus the covariate layout derived from it.
///
/// Covariate ordering is fixed as: the K* exogenous matrices (primitives
/// first, then any weights-interacted primitives), the own lag when present,
/// then the lagged-spillover channels in `lag_channels` order. `derived`
/// holds the assembled covariate matrices in exactly this order and is
/// recomputable bit-exactly from (Y_lag, X_star, weights).
struct PanelData {
  int n = 0;
  int T = 0;
  Matrix Y;                       // n x T outcomes
  std::vector<Matrix> X_star;     // K* exogenous covariates, each n x T
  Matrix Y_lag;                   // n x T, column t holds y_{t-1}; empty if static
  bool own_lag = false;
  std::vector<int> lag_channels;  // 0-based channel indices with W_q-lag covariates
  std::vector<Matrix> derived;

  int Kstar() const { return static_cast<int>(X_star.size()); }
  int n_phi() const { return (own_lag ? 1 : 0) + static_cast<int>(lag_channels.size()); }
  int K() const { return Kstar() + n_phi(); }
  int P(int Q) const { return Q + K(); }

  void validate() const;  // dimensions and finiteness
};

/// Fills data.derived from X_star, Y_lag and the weights set.
void assemble_derived(PanelData& data, const WeightsSet& weights);

/// Human-readable coefficient names in stacked order (rho_1.., delta_1..,
/// phi_1..), used by reports and tables.
std::vector<std::string> coefficient_names(const PanelData& data, int Q);

/// Instrument data matrices, ordered as the spillover instruments
/// sum_k beta_k G_q X_k for q = 1..Q followed by the covariates themselves.
struct Instruments {
  std::vector<Matrix> Z;  // P matrices, each n x T
};

/// Orthogonal projector held through an orthonormal basis of a column space.
struct Projector {
  Matrix basis;  // n x rank, orthonormal columns (rank may be zero)

  int rank() const { return static_cast<int>(basis.cols()); }
  int dim() const { return static_cast<int>(basis.rows()); }
  Matrix P() const;  // basis basis'
  Matrix M() const;  // I - P
  /// M x X without forming the n x n projector.
  Matrix apply_M(const Matrix& X) const;
  Matrix apply_P(const Matrix& X) const;
};

/// Orthonormal basis of the column space of B via SVD; singular values below
/// 1e-10 * s_max count as zero (pseudo-inverse semantics).
Projector projector_from(const Matrix& B);

/// S(rho) = I - sum_q rho_q W_q.
Matrix spatial_filter(const Vector& rho, const WeightsSet& weights);

/// log det S(rho) via pivoted LU with sign tracking. A nonpositive or
/// numerically vanishing determinant raises InadmissibleParameterError:
/// the likelihood presumes positivity on the region containing rho = 0.
double log_det_spatial_filter(const Vector& rho, const WeightsSet& weights);

/// A(rho, phi) = S^{-1}(rho) (phi_1 I + sum phi_{q+1} W_q), mapping y_{t-1}
/// to its reduced-form effect on y_t. `phi` is aligned with the panel's
/// dynamic layout; absent channels contribute nothing.
struct DynamicsMatrix {
  Matrix A;
  double spectral_norm = 0;  // stationarity diagnostic, must be < 1
};
DynamicsMatrix dynamics_matrix(const Vector& rho, const Vector& phi, const PanelData& data,
                               const WeightsSet& weights);

/// G_q(rho) = W_q S^{-1}(rho).
Matrix impact_matrix(int q, const Vector& rho, const WeightsSet& weights);

/// All Q impact matrices from a single factorisation of S(rho).
std::vector<Matrix> impact_matrices(const Vector& rho, const WeightsSet& weights);

/// Residual matrix E with columns e_t = S(rho) y_t - X_t beta.
Matrix residual_matrix(const ParamVector& theta, const PanelData& data, const WeightsSet& weights);

/// Instruments at a reference parameter: Z_q = G_q(rho) sum_k beta_k X_k for
/// q <= Q, then the covariates unchanged.
Instruments build_instruments(const ParamVector& theta_ref, const PanelData& data,
                              const WeightsSet& weights);

/// Largest singular value (2-norm).
double spectral_norm(const Matrix& A);

}  // namespace spillover
