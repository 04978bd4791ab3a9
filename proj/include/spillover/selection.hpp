#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "spillover/inference.hpp"
#include "spillover/optimizer.hpp"

namespace spillover {

/// Logarithmic penalty-level grids over (0, gamma_bar], one per block.
struct GammaGrid {
  std::vector<double> rho_values;   // strictly increasing
  std::vector<double> beta_values;  // strictly increasing
};

/// points log-spaced values on [lo_frac * bar, bar]; a zero bar collapses
/// the block to the single value 0. The floor must sit far below the bar:
/// adaptive weights |theta|^-zeta span many orders of magnitude, so the
/// support-recovering gammas do too.
GammaGrid log_gamma_grid(double bar_rho, double bar_beta, int points = 12,
                         double lo_frac = 1e-8);

/// One factor-count information criterion: data term plus penalty_fn(n,T) * R.
struct FactorICVariant {
  std::string name;
  std::function<double(int, int)> penalty_fn;
};

/// IC1: log(m)/m with m = min{n,T};
/// IC2: ((n+T)/nT) log(m);
/// IC3: ((n+T)/nT) log(nT/(n+T)).
std::vector<FactorICVariant> standard_factor_ic_variants();

/// Penalty level used for both support terms of IC*: log(m)/m, m = min{n,T}.
double ic_star_penalty(int n, int T);

struct IcStarFit {
  double ic = 0.0;
  double sigma2 = 0.0;
  int support_rho = 0;
  int support_beta = 0;
  OptimizerResult fit;
};

/// Fits the penalised model at gamma = (gamma_rho, gamma_beta) and evaluates
/// IC*(gamma) = sigma2(gamma) + penalty * (|S_rho| + |S_beta|).
IcStarFit ic_star_fit(double gamma_rho, double gamma_beta, const ObjectiveContext& ctx,
                      const PenaltyConfig& penalty_base, const OptimizerConfig& opt_cfg,
                      const ParamVector& theta_init);
double ic_star(double gamma_rho, double gamma_beta, const ObjectiveContext& ctx,
               const PenaltyConfig& penalty_base, const OptimizerConfig& opt_cfg,
               const ParamVector& theta_init);

struct GammaTraceRow {
  double gamma_rho = 0.0;
  double gamma_beta = 0.0;
  double sigma2 = 0.0;
  int support_rho = 0;
  int support_beta = 0;
  double ic = 0.0;
};

struct GammaSelection {
  double gamma_rho = 0.0;
  double gamma_beta = 0.0;
  std::vector<GammaTraceRow> trace;  // full product grid in evaluation order
  OptimizerResult best_fit;          // penalised fit at the selected gamma
};

/// Evaluates IC* over the product grid, descending in each block so that each
/// solution warm-starts the next denser fit. The argmin is taken in ascending
/// lexicographic (gamma_rho, gamma_beta) order; exact ties keep the earlier
/// point. Throws SelectionFailureError when every grid point fails.
GammaSelection select_gamma(const GammaGrid& grid, const ObjectiveContext& ctx,
                            const PenaltyConfig& penalty_base, const OptimizerConfig& opt_cfg,
                            const ParamVector& theta_init);

/// Pure factor panel implied by pilot coefficients: S(rho) Y - sum_k beta_k X_k.
Matrix residual_factor_panel(const ParamVector& theta_check, const ObjectiveContext& ctx);

/// Trailing eigenvalue sum of (1/nT) M M' for an arbitrary n x T matrix.
double trailing_eigen_sum(const Matrix& M, int R);

/// log(trailing eigenvalue sum) + penalty_fn(n,T) * R. Throws
/// NumericDegenerateError when the trailing sum is not positive.
double ic_factors(const Matrix& panel_resid, int R, const FactorICVariant& variant);

/// Per-variant argmin of ic_factors over R in {0..R_max}; ties break toward
/// the smaller R.
std::map<std::string, int> select_num_factors(const Matrix& panel_resid, int R_max,
                                              const std::vector<FactorICVariant>& variants);

struct FactorTraceRow {
  std::string variant;
  int R = 0;
  double ic = 0.0;
};

struct CoefficientReport {
  std::string name;
  double estimate = 0.0;
  double corrected = 0.0;
  double se = 0.0;
  double tstat = 0.0;
  double bias = 0.0;
  bool selected = false;
};

struct EstimationReport {
  int n = 0, T = 0, Q = 0, P = 0;
  int R_max = 0;
  int R_selected = 0;
  std::map<std::string, int> R_by_variant;
  double gamma_rho_bar = 0.0, gamma_beta_bar = 0.0;
  double gamma_rho = 0.0, gamma_beta = 0.0;
  double sigma2 = 0.0;
  double m3 = 0.0, m4 = 0.0;
  double d_condition = 0.0;
  std::vector<CoefficientReport> coefficients;
  std::vector<GammaTraceRow> gamma_trace;
  std::vector<FactorTraceRow> factor_trace;
  std::vector<double> theta_tilde;  // pilot estimates, stacked order
  std::vector<std::string> warnings;
};

struct PipelineConfig {
  int R_max = 6;
  double zeta = 4.0;
  int grid_points = 12;
  double grid_lo_frac = 1e-8;
  double tau = 0.01;
  OptimizerConfig opt;
  std::string factor_variant = "IC2";  // variant driving the pipeline's R*
  int fix_R = -1;                      // >= 0 skips factor selection
  double gamma_rho_override = -1.0;    // >= 0 skips the IC* search
  double gamma_beta_override = -1.0;
};

/// The multi-step procedure: unpenalised pilot at R_max, adaptive weights,
/// gamma chosen by IC*, penalised fit, factor count from the pure factor
/// panel, re-estimation at the detected count, then bias correction and
/// standard errors on the selected support. Stage failures abort with a
/// stage-tagged message.
EstimationReport full_pipeline(const PanelData& data, const WeightsSet& weights, int R_max,
                               const PipelineConfig& cfg);

}  // namespace spillover
