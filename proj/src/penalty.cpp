#include "spillover/penalty.hpp"

#include <cmath>

#include "spillover/errors.hpp"

namespace spillover {

PenaltyConfig PenaltyConfig::none(int Q, int P) {
  PenaltyConfig cfg;
  cfg.Q = Q;
  cfg.omega = Vector::Zero(P);
  cfg.frozen.assign(P, false);
  return cfg;
}

PenaltyConfig make_adaptive_weights(const ParamVector& theta_dagger, double zeta) {
  if (zeta <= 0) throw InvalidArgumentError("zeta must be positive");
  const Vector v = theta_dagger.stacked();
  PenaltyConfig cfg;
  cfg.zeta = zeta;
  cfg.Q = theta_dagger.Q();
  cfg.omega = Vector::Zero(v.size());
  cfg.frozen.assign(v.size(), false);
  for (int p = 0; p < v.size(); ++p) {
    if (v[p] == 0.0) {
      cfg.frozen[p] = true;
    } else {
      cfg.omega[p] = std::pow(std::abs(v[p]), -zeta);
    }
  }
  return cfg;
}

double penalty_value(const ParamVector& theta, const PenaltyConfig& cfg) {
  const Vector v = theta.stacked();
  if (v.size() != cfg.P() || theta.Q() != cfg.Q) {
    throw InvalidArgumentError("penalty config does not match parameter layout");
  }
  double total = 0;
  for (int p = 0; p < v.size(); ++p) {
    if (cfg.frozen[p]) {
      if (v[p] != 0.0) {
        throw InvariantViolationError("coordinate " + std::to_string(p) +
                                      " is frozen at zero but carries " + std::to_string(v[p]));
      }
      continue;
    }
    total += (p < cfg.Q ? cfg.gamma_rho : cfg.gamma_beta) * cfg.omega[p] * std::abs(v[p]);
  }
  return total;
}

Vector prox_step(const Vector& theta_in, const Vector& step_per_coord, const PenaltyConfig& cfg,
                 double rho_bound) {
  if (theta_in.size() != cfg.P() || step_per_coord.size() != cfg.P()) {
    throw InvalidArgumentError("penalty config does not match parameter layout");
  }
  Vector out(theta_in.size());
  for (int p = 0; p < theta_in.size(); ++p) {
    if (step_per_coord[p] <= 0) throw InvalidArgumentError("prox step must be positive");
    if (cfg.frozen[p]) {
      out[p] = 0.0;
      continue;
    }
    const double thr = cfg.threshold(p, step_per_coord[p]);
    const double mag = std::abs(theta_in[p]) - thr;
    out[p] = mag > 0 ? (theta_in[p] > 0 ? mag : -mag) : 0.0;
  }
  if (cfg.Q > 0 && rho_bound > 0) {
    const double l1 = out.head(cfg.Q).cwiseAbs().sum();
    if (l1 > rho_bound) out.head(cfg.Q) *= rho_bound / l1;
  }
  return out;
}

Vector prox_step(const Vector& theta_in, double step, const PenaltyConfig& cfg, double rho_bound) {
  if (step <= 0) throw InvalidArgumentError("prox step must be positive");
  return prox_step(theta_in, Vector::Constant(theta_in.size(), step), cfg, rho_bound);
}

}  // namespace spillover
