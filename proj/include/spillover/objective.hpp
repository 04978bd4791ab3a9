#pragma once

#include <optional>

#include "spillover/model.hpp"
#include "spillover/penalty.hpp"

namespace spillover {

/// Immutable evaluation context shared by every parameter point: the panel,
/// the channels, the factor count used in estimation and optional penalty.
/// Construction caches the channel-filtered outcomes W_q Y. Many threads may
/// evaluate against one context concurrently.
struct ObjectiveContext {
  PanelData data;
  WeightsSet weights;
  int R = 0;
  std::optional<PenaltyConfig> penalty;
  double tau = 0.01;
  double rho_bound = 0.0;   // (1 - tau) / max_q ||W_q||_inf
  std::vector<Matrix> WY;   // cached W_q Y

  // Per-coordinate curvature scales for diagonal preconditioning:
  // data_scale_p = ||W_q Y||_F^2 / nT (rho block) or ||X_k||_F^2 / nT (beta
  // block); the Hessian diagonal of the smooth part is roughly
  // data_scale / sigma2 plus log-det curvature on the rho block.
  Vector data_scale;
  Vector logdet_curvature;  // tr(W_q^2)/n at rho = 0, zero on the beta block

  int Q() const { return weights.size(); }
  int P() const { return data.P(Q()); }

  static ObjectiveContext make(PanelData data, WeightsSet weights, int R,
                               std::optional<PenaltyConfig> penalty = std::nullopt,
                               double tau = 0.01);
  /// Same panel and channels, different factor count / penalty.
  ObjectiveContext with(int R_new, std::optional<PenaltyConfig> penalty_new) const;
};

/// Loading-space estimate at a parameter point. Only the spanned spaces are
/// identified: the basis is orthonormal and no further rotation is imposed.
struct FactorEstimate {
  Matrix Lambda_basis;  // n x R, orthonormal columns
  Matrix F_hat;         // T x R, least-squares factors E' * basis
  double sigma2_hat = 0.0;
  bool degenerate_gap = false;  // eigenvalues R and R+1 coincide within 1e-12
};

/// Direct profile variance (1/nT) sum_t e_t' M_Lambda e_t for an arbitrary
/// loading matrix; the concentrated path below must match its minimum over
/// rank-R loading spaces.
double sigma2_profile(const ParamVector& theta, const Matrix& Lambda, const ObjectiveContext& ctx);

struct ConcentratedValue {
  double objective = 0.0;  // (1/n) log det S - 0.5 log(sigma2) - penalty
  double sigma2 = 0.0;     // trailing eigenvalue sum of (1/nT) E E'
};

/// Concentrated (penalised) quasi-likelihood. The trailing eigenvalue sum is
/// evaluated as trace minus the top-R eigenvalues of whichever Gram matrix
/// (E E' of size n or E' E of size T) is smaller; their nonzero spectra agree.
/// Throws InadmissibleParameterError outside the invertibility region and
/// NumericDegenerateError when the trailing sum is not positive.
ConcentratedValue concentrated_value(const ParamVector& theta, const ObjectiveContext& ctx);

/// Unpenalised value regardless of ctx.penalty.
ConcentratedValue concentrated_value_unpenalized(const ParamVector& theta,
                                                 const ObjectiveContext& ctx);

/// Top-R eigenvector basis of (1/nT) E E' with the trailing sum as variance.
FactorEstimate recover_factor_estimate(const ParamVector& theta, const ObjectiveContext& ctx);

struct GradientResult {
  Vector grad;  // length P, d/dtheta of the unpenalised concentrated objective
  bool used_finite_difference = false;
};

/// Analytic gradient of the smooth part via the envelope property: the
/// concentrating basis is held fixed under differentiation. Near-degenerate
/// eigen-gaps fall back to central finite differences with step 1e-6.
GradientResult smooth_gradient(const ParamVector& theta, const ObjectiveContext& ctx);

}  // namespace spillover
