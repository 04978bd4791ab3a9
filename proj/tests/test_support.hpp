#pragma once

#include <vector>

#include "spillover/dgp.hpp"
#include "spillover/network.hpp"
#include "spillover/rng.hpp"

namespace spillover::testing {

inline Matrix random_matrix(SplitMix64& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.next_normal();
  }
  return m;
}

/// Exchange matrix [[0,1],[1,0]] as a single-channel set.
inline WeightsSet exchange_pair() {
  WeightsMatrix w;
  w.n = 2;
  w.values = Matrix::Zero(2, 2);
  w.values(0, 1) = 1.0;
  w.values(1, 0) = 1.0;
  w.label = "exchange";
  w.row_normalized = true;
  WeightsSet set;
  set.matrices.push_back(w);
  return set;
}

inline WeightsSet path_set(int n, int Q) {
  WeightsSet set;
  for (int q = 1; q <= Q; ++q) set.matrices.push_back(build_path_neighbors(n, q));
  return set;
}

/// Admissible random rho with sum of |rho_q| strictly inside the bound.
inline Vector random_admissible_rho(SplitMix64& rng, const WeightsSet& weights, double tau = 0.01) {
  const int Q = weights.size();
  Vector rho(Q);
  for (int q = 0; q < Q; ++q) rho[q] = rng.next_normal();
  const double bound = 0.8 * rho_l1_bound(weights, tau);
  const double l1 = rho.cwiseAbs().sum();
  if (l1 > 0) rho *= bound * rng.next_double() / l1;
  return rho;
}

/// Small dynamic design with Q channels, Kp primitives, and all lag channels.
inline SimulationDesign small_design(int n, int T, int Q, int Kp, int R0,
                                     std::uint64_t seed = 7) {
  SimulationDesign d;
  d.n = n;
  d.T = T;
  d.R0 = R0;
  d.weights = path_set(n, Q);
  d.sigma0_sq = 1.0;
  d.burn_in = 100;
  d.seed = seed;
  d.n_primitives = Kp;
  d.own_lag = true;
  for (int q = 0; q + 1 < Q; ++q) d.lag_channels.push_back(q);
  d.theta0.rho = Vector::Zero(Q);
  d.theta0.rho[0] = 0.2;
  d.theta0.delta = Vector::Zero(Kp);
  d.theta0.delta[0] = 1.0;
  d.theta0.phi = Vector::Zero(1 + static_cast<int>(d.lag_channels.size()));
  d.theta0.phi[0] = 0.2;
  return d;
}

}  // namespace spillover::testing
