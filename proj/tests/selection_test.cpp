#include "spillover/selection.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "spillover/dgp.hpp"
#include "spillover/errors.hpp"
#include "test_support.hpp"

using namespace spillover;
using namespace spillover::testing;

namespace {

OptimizerConfig fast_config() {
  OptimizerConfig cfg;
  cfg.max_iterations = 2000;
  cfg.multistart_count = 1;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// grids and penalty levels
// ---------------------------------------------------------------------------

TEST_CASE("log gamma grid spans [lo_frac * bar, bar]") {
  const GammaGrid g = log_gamma_grid(2.0, 0.5, 5, 1e-4);
  REQUIRE(g.rho_values.size() == 5);
  CHECK(g.rho_values.front() == doctest::Approx(2.0 * 1e-4).epsilon(1e-12));
  CHECK(g.rho_values.back() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(g.beta_values.back() == doctest::Approx(0.5).epsilon(1e-12));
  for (size_t i = 1; i < g.rho_values.size(); ++i) {
    CHECK(g.rho_values[i] > g.rho_values[i - 1]);
    CHECK(g.rho_values[i] / g.rho_values[i - 1] ==
          doctest::Approx(std::pow(1e4, 0.25)).epsilon(1e-9));
  }

  SUBCASE("zero bar collapses to the single value 0") {
    const GammaGrid z = log_gamma_grid(0.0, 1.0, 5, 1e-4);
    REQUIRE(z.rho_values.size() == 1);
    CHECK(z.rho_values[0] == 0.0);
  }
}

TEST_CASE("IC* penalty level and factor-IC penalty variants") {
  CHECK(ic_star_penalty(25, 25) == doctest::Approx(std::log(25.0) / 25).epsilon(1e-12));
  CHECK(ic_star_penalty(25, 50) == doctest::Approx(std::log(25.0) / 25).epsilon(1e-12));

  const auto variants = standard_factor_ic_variants();
  REQUIRE(variants.size() == 3);
  // n = T = 25: log(25)/25 ~ 0.128755
  CHECK(variants[0].penalty_fn(25, 25) == doctest::Approx(0.1287550).epsilon(1e-6));
  CHECK(variants[1].penalty_fn(25, 25) ==
        doctest::Approx((50.0 / 625.0) * std::log(25.0)).epsilon(1e-12));
  CHECK(variants[2].penalty_fn(25, 25) ==
        doctest::Approx((50.0 / 625.0) * std::log(625.0 / 50.0)).epsilon(1e-12));
  // IC1 penalises least at n = T = 25, its documented failure mode
  CHECK(variants[0].penalty_fn(25, 25) < variants[2].penalty_fn(25, 25));
  CHECK(variants[2].penalty_fn(25, 25) < variants[1].penalty_fn(25, 25));
}

// ---------------------------------------------------------------------------
// ic_star and select_gamma
// ---------------------------------------------------------------------------

namespace {

struct SmallFit {
  ObjectiveContext ctx;
  OptimizerResult pilot;
  PenaltyConfig pen;
  double bar = 0;
};

SmallFit small_fit(std::uint64_t seed, int n = 10, int T = 9) {
  const SimulationDesign d = small_design(n, T, 2, 2, 1, seed);
  const SimulatedTruth truth = simulate(d);
  SmallFit f{ObjectiveContext::make(truth.panel, d.weights, 1), {}, {}, 0};
  f.pilot = maximize_unpenalized(f.ctx, fast_config());
  f.pen = make_adaptive_weights(f.pilot.theta_hat, 4.0);
  f.bar = compute_gamma_bar(f.ctx, f.pen, fast_config(), f.pilot.theta_hat).first;
  return f;
}

}  // namespace

TEST_CASE("ic_star at the grid edges") {
  SmallFit f = small_fit(601);
  const double pen_level = ic_star_penalty(10, 9);

  SUBCASE("gamma above gamma-bar leaves only the variance term") {
    const IcStarFit empty =
        ic_star_fit(2 * f.bar, 2 * f.bar, f.ctx, f.pen, fast_config(), f.pilot.theta_hat);
    CHECK(empty.support_rho + empty.support_beta == 0);
    CHECK(empty.ic == doctest::Approx(empty.sigma2).epsilon(1e-12));
  }
  SUBCASE("gamma = 0 pays for the full live support") {
    const IcStarFit full =
        ic_star_fit(0.0, 0.0, f.ctx, f.pen, fast_config(), f.pilot.theta_hat);
    const int live = static_cast<int>(f.pilot.active_support.size());
    CHECK(full.support_rho + full.support_beta == live);
    CHECK(full.ic == doctest::Approx(full.sigma2 + pen_level * live).epsilon(1e-10));
  }
}

TEST_CASE("select_gamma basics") {
  SmallFit f = small_fit(607);

  SUBCASE("single-point grid returns that point") {
    GammaGrid g;
    g.rho_values = {0.3 * f.bar};
    g.beta_values = {0.2 * f.bar};
    const GammaSelection sel = select_gamma(g, f.ctx, f.pen, fast_config(), f.pilot.theta_hat);
    CHECK(sel.gamma_rho == 0.3 * f.bar);
    CHECK(sel.gamma_beta == 0.2 * f.bar);
    CHECK(sel.trace.size() == 1);
  }
  SUBCASE("trace is reproducible bit-exactly and the argmin wins") {
    const GammaGrid g = log_gamma_grid(f.bar, f.bar, 4, 1e-3);
    const GammaSelection a = select_gamma(g, f.ctx, f.pen, fast_config(), f.pilot.theta_hat);
    const GammaSelection b = select_gamma(g, f.ctx, f.pen, fast_config(), f.pilot.theta_hat);
    REQUIRE(a.trace.size() == 16);
    for (size_t i = 0; i < 16; ++i) {
      CHECK(a.trace[i].ic == b.trace[i].ic);
      CHECK(a.trace[i].sigma2 == b.trace[i].sigma2);
    }
    CHECK(a.gamma_rho == b.gamma_rho);

    double best = std::numeric_limits<double>::infinity();
    for (const auto& row : a.trace) {
      if (!std::isnan(row.ic)) best = std::min(best, row.ic);
    }
    for (const auto& row : a.trace) {
      if (row.gamma_rho == a.gamma_rho && row.gamma_beta == a.gamma_beta) {
        CHECK(row.ic == doctest::Approx(best).epsilon(1e-12));
      }
    }
  }
  SUBCASE("empty grid fails") {
    GammaGrid g;
    CHECK_THROWS_AS(select_gamma(g, f.ctx, f.pen, fast_config(), f.pilot.theta_hat),
                    SelectionFailureError);
  }
}

// ---------------------------------------------------------------------------
// residual factor panel and factor-count criteria
// ---------------------------------------------------------------------------

TEST_CASE("residual factor panel") {
  SUBCASE("at the truth with zero noise it is exactly the common component") {
    SimulationDesign d = small_design(7, 6, 2, 1, 2, 613);
    d.sigma0_sq = 0.0;
    const SimulatedTruth truth = simulate(d);
    ObjectiveContext ctx = ObjectiveContext::make(truth.panel, d.weights, 2);
    const Matrix resid = residual_factor_panel(d.theta0, ctx);
    const Matrix common = truth.Lambda0 * truth.F0.transpose();
    CHECK((resid - common).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("at theta = 0 it returns the outcomes") {
    const SimulationDesign d = small_design(6, 5, 1, 1, 1, 617);
    const SimulatedTruth truth = simulate(d);
    ObjectiveContext ctx = ObjectiveContext::make(truth.panel, d.weights, 1);
    const ParamVector zero = ParamVector::zeros(1, 1, 1);
    CHECK((residual_factor_panel(zero, ctx) - truth.panel.Y).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("it coincides with the residual matrix") {
    const SimulationDesign d = small_design(6, 5, 2, 2, 1, 619);
    const SimulatedTruth truth = simulate(d);
    ObjectiveContext ctx = ObjectiveContext::make(truth.panel, d.weights, 1);
    SplitMix64 rng(620);
    ParamVector theta;
    theta.rho = random_admissible_rho(rng, d.weights);
    theta.delta = random_matrix(rng, truth.panel.Kstar(), 1).col(0);
    theta.phi = 0.1 * random_matrix(rng, truth.panel.n_phi(), 1).col(0);
    const Matrix a = residual_factor_panel(theta, ctx);
    const Matrix b = residual_matrix(theta, truth.panel, d.weights);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("ic_factors rank logic and arithmetic") {
  SplitMix64 rng(631);
  const auto variants = standard_factor_ic_variants();

  SUBCASE("exact low-rank input degenerates at its rank") {
    const Matrix L = random_matrix(rng, 8, 3);
    const Matrix F = random_matrix(rng, 7, 3);
    const Matrix resid = L * F.transpose();  // exact rank 3
    CHECK_THROWS_AS(ic_factors(resid, 3, variants[0]), NumericDegenerateError);
    CHECK(std::isfinite(ic_factors(resid, 2, variants[0])));
  }
  SUBCASE("value assembles log trailing sum plus penalty") {
    const Matrix resid = random_matrix(rng, 25, 25);
    const double trailing = trailing_eigen_sum(resid, 2);
    const double expect = std::log(trailing) + 2 * std::log(25.0) / 25;
    CHECK(ic_factors(resid, 2, variants[0]) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("factor-count selection") {
  const auto variants = standard_factor_ic_variants();

  SUBCASE("pure noise selects zero factors almost always") {
    SplitMix64 rng(641);
    int zero_picks = 0;
    for (int rep = 0; rep < 100; ++rep) {
      const Matrix noise = random_matrix(rng, 25, 25);
      const auto picks = select_num_factors(noise, 5, variants);
      if (picks.at("IC2") == 0) ++zero_picks;
    }
    CHECK(zero_picks >= 90);
  }
  SUBCASE("strong rank-2 signal over a flat noise floor is found by every variant") {
    // A flat residual spectrum makes the post-rank data-term drops tiny, so
    // even IC1's weak penalty rejects extra factors.
    SplitMix64 rng(643);
    const Matrix L = random_matrix(rng, 60, 2, 3.0);
    const Matrix F = random_matrix(rng, 60, 2, 3.0);
    const Matrix resid = L * F.transpose() + 0.3 * Matrix::Identity(60, 60);
    const auto picks = select_num_factors(resid, 6, variants);
    for (const auto& [name, R] : picks) CHECK(R == 2);
  }
  SUBCASE("R_max = 0 forces zero") {
    SplitMix64 rng(647);
    const auto picks = select_num_factors(random_matrix(rng, 10, 10), 0, variants);
    CHECK(picks.at("IC1") == 0);
  }
}

// ---------------------------------------------------------------------------
// full pipeline
// ---------------------------------------------------------------------------

TEST_CASE("pipeline precondition: nT must exceed P") {
  SimulationDesign d = small_design(12, 8, 2, 2, 1, 653);
  const SimulatedTruth truth = simulate(d);
  PipelineConfig cfg;
  cfg.opt = fast_config();
  cfg.fix_R = 1;
  cfg.grid_points = 3;
  // P = 6 < nT = 96: runs fine
  CHECK_NOTHROW(full_pipeline(truth.panel, d.weights, 2, cfg));

  PanelData tiny = truth.panel;  // force n*T <= P
  tiny.T = 0;
  CHECK_THROWS_AS(full_pipeline(tiny, d.weights, 2, cfg), InvalidArgumentError);
}

TEST_CASE("pipeline on a dynamic spillover panel recovers structure") {
  SimulationDesign d = small_design(20, 20, 2, 2, 1, 659);
  d.theta0.rho[0] = 0.3;
  d.theta0.delta[0] = 2.0;
  d.theta0.phi[0] = 0.25;
  const SimulatedTruth truth = simulate(d);

  PipelineConfig cfg;
  cfg.opt = fast_config();
  cfg.R_max = 3;
  cfg.grid_points = 6;
  const EstimationReport rep = full_pipeline(truth.panel, d.weights, 3, cfg);

  CHECK(rep.n == 20);
  CHECK(rep.P == 6);  // 2 rho + 2 delta + own lag + one lagged channel
  CHECK(rep.gamma_rho_bar > 0);
  CHECK(rep.gamma_trace.size() == 36);
  CHECK(rep.R_by_variant.size() == 3);
  CHECK(rep.factor_trace.size() == 12);  // 3 variants x R in 0..3
  REQUIRE(static_cast<int>(rep.coefficients.size()) == 6);
  // the three live coefficients survive selection with sane inference
  CHECK(rep.coefficients[0].selected);  // rho_1
  CHECK(rep.coefficients[2].selected);  // delta_1
  CHECK(rep.coefficients[4].selected);  // phi_1
  for (const auto& c : rep.coefficients) {
    if (c.selected) {
      CHECK(c.se > 0);
      CHECK(std::isfinite(c.corrected));
    } else {
      CHECK(c.estimate == 0.0);
    }
  }
  CHECK(rep.d_condition > 0);
  CHECK(rep.sigma2 > 0);
}

TEST_CASE("pipeline refit at the selected gamma reproduces the reported support") {
  SimulationDesign d = small_design(14, 12, 2, 1, 1, 661);
  const SimulatedTruth truth = simulate(d);
  PipelineConfig cfg;
  cfg.opt = fast_config();
  cfg.grid_points = 4;
  cfg.fix_R = 1;
  const EstimationReport rep = full_pipeline(truth.panel, d.weights, 1, cfg);

  ObjectiveContext ctx = ObjectiveContext::make(truth.panel, d.weights, 1);
  ParamVector pilot = ParamVector::from_stacked(
      Eigen::Map<const Vector>(rep.theta_tilde.data(), rep.theta_tilde.size()), 2, 1);
  PenaltyConfig pen = make_adaptive_weights(pilot, cfg.zeta);
  pen.gamma_rho = rep.gamma_rho;
  pen.gamma_beta = rep.gamma_beta;
  const OptimizerResult refit = maximize_penalized(ctx, pen, cfg.opt, pilot);
  for (int p = 0; p < rep.P; ++p) {
    const bool in_refit = std::find(refit.active_support.begin(), refit.active_support.end(),
                                    p) != refit.active_support.end();
    CHECK(rep.coefficients[p].selected == in_refit);
  }
}

TEST_CASE("pipeline degrades gracefully without channels or factors") {
  SimulationDesign d;
  d.n = 15;
  d.T = 15;
  d.R0 = 0;
  d.sigma0_sq = 1.0;
  d.burn_in = 30;
  d.seed = 673;
  d.n_primitives = 1;
  d.theta0.rho = Vector::Zero(0);
  d.theta0.delta = Vector::Zero(1);
  d.theta0.delta << 1.5;
  d.theta0.phi = Vector::Zero(0);
  const SimulatedTruth truth = simulate(d);

  PipelineConfig cfg;
  cfg.opt = fast_config();
  cfg.grid_points = 4;
  cfg.R_max = 2;
  const EstimationReport rep = full_pipeline(truth.panel, d.weights, 2, cfg);
  CHECK(rep.R_selected <= 1);  // no factor structure to find
  REQUIRE(rep.coefficients.size() == 1);
  CHECK(rep.coefficients[0].selected);
  CHECK(std::abs(rep.coefficients[0].estimate - 1.5) < 0.1);
}

TEST_CASE("gamma override skips the IC* search") {
  SimulationDesign d = small_design(12, 10, 1, 1, 1, 677);
  const SimulatedTruth truth = simulate(d);
  PipelineConfig cfg;
  cfg.opt = fast_config();
  cfg.fix_R = 1;
  cfg.gamma_rho_override = 0.0;
  cfg.gamma_beta_override = 0.0;
  const EstimationReport rep = full_pipeline(truth.panel, d.weights, 1, cfg);
  CHECK(rep.gamma_rho == 0.0);
  CHECK(rep.gamma_trace.size() == 1);
}
