#pragma once

#include <cstdint>
#include <vector>

#include "spillover/model.hpp"
#include "spillover/rng.hpp"

namespace spillover {

/// How each primitive exogenous covariate is generated:
///   x*_{k,it} = nu_k + sum_r lambda_ir f_rt + e_it,
/// nu_k a uniform integer draw on {nu_lo..nu_hi} made once per covariate and
/// e_it Gaussian with variance noise_var. Correlation with the factor
/// component is deliberate.
struct CovariateSpec {
  double noise_var = 2.0;
  int nu_lo = -10;
  int nu_hi = 10;
};

struct SimulationDesign {
  int n = 0;
  int T = 0;
  int R0 = 0;                  // true factor count
  ParamVector theta0;          // true coefficients
  WeightsSet weights;
  double sigma0_sq = 1.0;      // idiosyncratic variance
  int burn_in = 200;
  std::uint64_t seed = 0;
  CovariateSpec covariate_spec;

  int n_primitives = 0;              // primitive exogenous covariates
  std::vector<int> interact_channels;  // channels interacted with the first primitive
  bool own_lag = false;
  std::vector<int> lag_channels;       // channels whose W_q y_{t-1} enter as covariates

  int Kstar() const { return n_primitives + static_cast<int>(interact_channels.size()); }
  void validate() const;
};

struct SimulatedTruth {
  Matrix Lambda0;  // n x R0
  Matrix F0;       // T x R0, retained periods
  Matrix epsilon;  // n x T, retained periods
  PanelData panel;
};

/// The simulation-study design for the supported grid n, T in {25, 50, 100}:
/// rho0 = (0.2, 0.2, 0[, 0.2][, 0]), primitive deltas (3, 0, -3[, 0][, 3]),
/// interaction deltas (1, 0, -1[, 0][, 1]), dynamics (0.15, 0, -0.15[, 0][, 0]),
/// R0 = 3, weights = row-normalised path matrices of degrees 1..Q with
/// Q = 3, 4, 5 at n = 25, 50, 100. Bracketed entries appear only at the
/// larger n or T; the lagged-spillover channels stop at Q-1.
SimulationDesign table1_design(int n, int T);

/// Simulates a panel from the design. The outcome recursion
///   y_t = A y_{t-1} + S^{-1}(X*_t delta + Lambda0 f_t + eps_t)
/// runs over burn_in + T periods from y = 0, discarding the first burn_in
/// periods together with their factor, covariate and error draws. Identical
/// (design, seed) pairs produce bit-identical output. Throws
/// InvalidArgumentError when ||A||_2 >= 1.
SimulatedTruth simulate(const SimulationDesign& design);

/// Reruns the outcome recursion with the idiosyncratic errors set to zero,
/// holding the exogenous covariates and the supplied common component
/// (an n x T matrix, typically Lambda F') fixed, starting from the panel's
/// observed pre-sample outcome (first column of Y_lag). Used for the
/// conditional-expectation instruments. Static layouts skip the recursion.
PanelData simulate_expected_path(const ParamVector& theta, const PanelData& base,
                                 const Matrix& factor_product, const WeightsSet& weights);

}  // namespace spillover
