#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spillover/objective.hpp"

namespace spillover {

struct OptimizerConfig {
  int max_iterations = 5000;
  double objective_tolerance = 1e-9;
  double step_init = 1.0;
  double backtrack_factor = 0.5;
  int multistart_count = 3;
  std::uint64_t seed = 0;
  std::string trace_path;  // when nonempty, JSON lines per accepted iteration

  void validate() const;
};

struct OptimizerResult {
  ParamVector theta_hat;
  std::vector<double> objective_trace;  // nondecreasing by construction
  double objective = 0.0;               // penalised when a penalty is active
  double sigma2 = 0.0;
  bool converged = false;
  int iterations_used = 0;
  std::vector<int> active_support;  // indices p with theta_p != 0
  double final_step = 0.0;
};

/// Deterministic starting point: rho = 0, beta from a least-squares fit of Y
/// on the covariates after projecting out R principal components of Y.
ParamVector default_init(const ObjectiveContext& ctx);

/// Proximal-gradient ascent on the smooth concentrated likelihood with
/// backtracking; each step projects the rho block onto the admissible region.
/// With multistart_count > 1, additional runs start from random admissible
/// perturbations of the initial point and the best objective wins.
OptimizerResult maximize_unpenalized(const ObjectiveContext& ctx, const OptimizerConfig& cfg,
                                     const ParamVector& theta_init);
OptimizerResult maximize_unpenalized(const ObjectiveContext& ctx, const OptimizerConfig& cfg);

/// Gradient step on the smooth part followed by the weighted soft-threshold
/// prox; backtracking monitors the full penalised objective. Coordinates hit
/// zero exactly and may re-enter later; only pilot-zero coordinates stay
/// frozen. theta_init must respect the frozen mask.
OptimizerResult maximize_penalized(const ObjectiveContext& ctx, const PenaltyConfig& penalty,
                                   const OptimizerConfig& cfg, const ParamVector& theta_init);

/// Smallest gamma (shared across both blocks during the search) at which the
/// penalised fit returns an empty support, located by doubling and bisection
/// to 5% relative bracket width. Data that are all-zero to begin with give 0.
std::pair<double, double> compute_gamma_bar(const ObjectiveContext& ctx,
                                            const PenaltyConfig& penalty_base,
                                            const OptimizerConfig& cfg,
                                            const ParamVector& theta_init);

}  // namespace spillover
