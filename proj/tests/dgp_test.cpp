#include "spillover/dgp.hpp"

#include <doctest.h>

#include <cmath>

#include "spillover/errors.hpp"
#include "test_support.hpp"

using namespace spillover;
using namespace spillover::testing;

// ---------------------------------------------------------------------------
// table1_design
// ---------------------------------------------------------------------------

TEST_CASE("table1 design at (25,25)") {
  const SimulationDesign d = table1_design(25, 25);
  CHECK(d.R0 == 3);
  CHECK(d.weights.size() == 3);
  CHECK(d.n_primitives == 3);
  REQUIRE(d.theta0.rho.size() == 3);
  CHECK(d.theta0.rho[0] == 0.2);
  CHECK(d.theta0.rho[1] == 0.2);
  CHECK(d.theta0.rho[2] == 0.0);
  REQUIRE(d.theta0.delta.size() == 6);  // 3 primitives + 3 interactions
  CHECK(d.theta0.delta[0] == 3.0);
  CHECK(d.theta0.delta[1] == 0.0);
  CHECK(d.theta0.delta[2] == -3.0);
  CHECK(d.theta0.delta[3] == 1.0);
  CHECK(d.theta0.delta[4] == 0.0);
  CHECK(d.theta0.delta[5] == -1.0);
  REQUIRE(d.theta0.phi.size() == 3);  // own lag + 2 lagged channels
  CHECK(d.theta0.phi[0] == 0.15);
  CHECK(d.theta0.phi[1] == 0.0);
  CHECK(d.theta0.phi[2] == -0.15);
  CHECK(d.lag_channels == std::vector<int>{0, 1});
}

TEST_CASE("table1 design at (100,100)") {
  const SimulationDesign d = table1_design(100, 100);
  CHECK(d.weights.size() == 5);
  REQUIRE(d.theta0.rho.size() == 5);
  CHECK(d.theta0.rho[3] == 0.2);
  CHECK(d.theta0.rho[4] == 0.0);
  REQUIRE(d.theta0.delta.size() == 10);
  CHECK(d.theta0.delta[3] == 0.0);
  CHECK(d.theta0.delta[4] == 3.0);
  CHECK(d.theta0.delta[9] == 1.0);  // fifth interaction
  REQUIRE(d.theta0.phi.size() == 5);
  CHECK(d.theta0.phi[3] == 0.0);
  CHECK(d.theta0.phi[4] == 0.0);
  CHECK(d.theta0.P() == 20);
}

TEST_CASE("table1 design rejects off-grid sizes") {
  CHECK_THROWS_AS(table1_design(30, 25), InvalidArgumentError);
  CHECK_THROWS_AS(table1_design(25, 10), InvalidArgumentError);
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

TEST_CASE("all-zero design simulates an exactly zero panel") {
  SimulationDesign d = small_design(6, 5, 2, 1, 0);
  d.sigma0_sq = 0.0;
  d.theta0.rho.setZero();
  d.theta0.delta.setZero();
  d.theta0.phi.setZero();
  const SimulatedTruth truth = simulate(d);
  CHECK(truth.panel.Y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("static no-spillover design matches the closed-form oracle") {
  SimulationDesign d;
  d.n = 7;
  d.T = 6;
  d.R0 = 2;
  d.weights = path_set(7, 2);
  d.sigma0_sq = 1.0;
  d.burn_in = 30;
  d.seed = 99;
  d.n_primitives = 2;
  d.interact_channels = {0};
  d.theta0.rho = Vector::Zero(2);
  d.theta0.delta = Vector::Zero(3);
  d.theta0.delta << 1.5, -0.5, 2.0;
  d.theta0.phi = Vector::Zero(0);

  const SimulatedTruth truth = simulate(d);
  // no recursion: y_t = X*_t delta + Lambda f_t + eps_t
  Matrix oracle = truth.Lambda0 * truth.F0.transpose() + truth.epsilon;
  for (int k = 0; k < 3; ++k) oracle += d.theta0.delta[k] * truth.panel.X_star[k];
  CHECK((truth.panel.Y - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identical (design, seed) gives bit-identical output") {
  const SimulationDesign d = small_design(5, 4, 2, 2, 1, 1234);
  const SimulatedTruth a = simulate(d);
  const SimulatedTruth b = simulate(d);
  CHECK((a.panel.Y - b.panel.Y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.Lambda0 - b.Lambda0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.epsilon - b.epsilon).cwiseAbs().maxCoeff() == 0.0);
  const SimulatedTruth c = simulate(small_design(5, 4, 2, 2, 1, 1235));
  CHECK((a.panel.Y - c.panel.Y).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("derived covariates are recomputable bit-exactly") {
  const SimulationDesign d = small_design(6, 5, 3, 2, 1, 7);
  const SimulatedTruth truth = simulate(d);
  const PanelData& p = truth.panel;
  int k = p.Kstar();
  CHECK((p.derived[k++] - p.Y_lag).cwiseAbs().maxCoeff() == 0.0);
  for (int q : p.lag_channels) {
    const Matrix rebuilt = d.weights[q] * p.Y_lag;
    CHECK((p.derived[k++] - rebuilt).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("non-stationary design is rejected") {
  SimulationDesign d = small_design(5, 4, 2, 1, 0);
  d.theta0.phi[0] = 1.05;
  CHECK_THROWS_AS(simulate(d), InvalidArgumentError);
}

TEST_CASE("sample variance stabilizes across the panel (stationarity)") {
  // Variance over the last T/2 periods vs the preceding T/2, averaged
  // across seeds, should differ by well under 10%.
  const int n_seeds = 100;
  double ratio_sum = 0;
  for (int s = 0; s < n_seeds; ++s) {
    SimulationDesign d = table1_design(50, 50);
    d.seed = 1000 + s;
    const SimulatedTruth truth = simulate(d);
    const auto var_of = [](const Matrix& block) {
      const double mean = block.mean();
      return (block.array() - mean).square().sum() / (block.size() - 1);
    };
    const double v1 = var_of(truth.panel.Y.leftCols(25));
    const double v2 = var_of(truth.panel.Y.rightCols(25));
    ratio_sum += std::abs(v2 - v1) / v1;
  }
  CHECK(ratio_sum / n_seeds < 0.10);
}

// ---------------------------------------------------------------------------
// simulate_expected_path
// ---------------------------------------------------------------------------

TEST_CASE("expected path equals the panel when sigma0 = 0") {
  SimulationDesign d = small_design(6, 5, 2, 2, 2, 21);
  d.sigma0_sq = 0.0;
  const SimulatedTruth truth = simulate(d);
  const Matrix common = truth.Lambda0 * truth.F0.transpose();
  const PanelData expected =
      simulate_expected_path(d.theta0, truth.panel, common, d.weights);
  CHECK((expected.Y - truth.panel.Y).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((expected.Y_lag - truth.panel.Y_lag).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("expected path without dynamics is X delta + common component") {
  SimulationDesign d = small_design(5, 4, 2, 2, 1, 31);
  const SimulatedTruth truth = simulate(d);

  PanelData base = truth.panel;  // strip the dynamics from the layout
  base.own_lag = false;
  base.lag_channels.clear();
  base.Y_lag.resize(0, 0);
  assemble_derived(base, d.weights);

  ParamVector theta = ParamVector::zeros(2, 2, 0);
  theta.delta << 1.0, -2.0;
  SplitMix64 rng(77);
  const Matrix common = random_matrix(rng, 5, 4);
  const PanelData expected = simulate_expected_path(theta, base, common, d.weights);
  const Matrix oracle = theta.delta[0] * base.X_star[0] + theta.delta[1] * base.X_star[1] + common;
  CHECK((expected.Y - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("expected path matches a 50k-redraw resampling mean") {
  SimulationDesign d = small_design(4, 4, 1, 1, 0, 555);
  d.theta0.rho[0] = 0.3;
  d.theta0.phi[0] = 0.4;
  d.sigma0_sq = 1.0;
  const SimulatedTruth truth = simulate(d);
  const Matrix common = Matrix::Zero(4, 4);

  const PanelData expected = simulate_expected_path(d.theta0, truth.panel, common, d.weights);

  // Resampling oracle: rerun the recursion from the observed presample value
  // with fresh errors, average the outcomes.
  const Matrix S = spatial_filter(d.theta0.rho, d.weights);
  const Matrix S_inv = S.inverse();
  const Matrix lag_op = d.theta0.phi[0] * Matrix::Identity(4, 4);
  Matrix exog = Matrix::Zero(4, 4);
  exog += d.theta0.delta[0] * truth.panel.X_star[0];

  const int draws = 50000;
  Matrix mean = Matrix::Zero(4, 4);
  Matrix msq = Matrix::Zero(4, 4);
  SplitMix64 rng(808);
  for (int rep = 0; rep < draws; ++rep) {
    Vector y_prev = truth.panel.Y_lag.col(0);
    Matrix Y(4, 4);
    for (int t = 0; t < 4; ++t) {
      Vector eps(4);
      for (int i = 0; i < 4; ++i) eps[i] = rng.next_normal();
      y_prev = S_inv * (lag_op * y_prev + exog.col(t) + eps);
      Y.col(t) = y_prev;
    }
    mean += Y;
    msq += Y.cwiseProduct(Y);
  }
  mean /= draws;
  msq /= draws;
  const Matrix se = ((msq - mean.cwiseProduct(mean)) / draws).cwiseMax(0.0).cwiseSqrt();
  const Matrix z = (mean - expected.Y).cwiseAbs().cwiseQuotient(se);
  CHECK(z.maxCoeff() < 3.0);
}
