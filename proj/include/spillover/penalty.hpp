#pragma once

#include <vector>

#include "spillover/model.hpp"

namespace spillover {

/// Adaptive-Lasso weights and penalty levels.
///
/// omega_p = |theta_dagger_p|^{-zeta} where the pilot estimate is nonzero.
/// Coordinates where it is exactly zero are recorded in `frozen` and pinned
/// to zero thereafter; no infinity sentinel enters the arithmetic.
struct PenaltyConfig {
  double gamma_rho = 0.0;
  double gamma_beta = 0.0;
  double zeta = 4.0;
  int Q = 0;                 // rho-block size, routes gamma_rho vs gamma_beta
  Vector omega;              // length P; frozen coordinates hold 0 (unused)
  std::vector<bool> frozen;  // length P

  int P() const { return static_cast<int>(omega.size()); }
  double threshold(int p, double step) const {
    return step * (p < Q ? gamma_rho : gamma_beta) * omega[p];
  }
  /// Penalty with both gammas zero and nothing frozen (projection only).
  static PenaltyConfig none(int Q, int P);
};

PenaltyConfig make_adaptive_weights(const ParamVector& theta_dagger, double zeta);

/// gamma_rho sum_q omega_q |rho_q| + gamma_beta sum_k omega_{Q+k} |beta_k|.
/// A nonzero coefficient on a frozen coordinate violates the config's
/// invariant and throws InvariantViolationError.
double penalty_value(const ParamVector& theta, const PenaltyConfig& cfg);

/// Proximal map of the weighted l1 penalty: coordinatewise soft threshold at
/// step * gamma * omega_p, frozen coordinates forced to zero, then the rho
/// block rescaled radially onto sum_q |rho_q| <= rho_bound.
Vector prox_step(const Vector& theta_in, double step, const PenaltyConfig& cfg, double rho_bound);

/// Prox under a diagonal metric: coordinate p is thresholded at
/// step_per_coord[p] * gamma * omega_p. Used by the preconditioned optimizer.
Vector prox_step(const Vector& theta_in, const Vector& step_per_coord, const PenaltyConfig& cfg,
                 double rho_bound);

}  // namespace spillover
