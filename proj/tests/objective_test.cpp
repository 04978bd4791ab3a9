#include "spillover/objective.hpp"

#include <doctest.h>

#include <cmath>

#include "spillover/dgp.hpp"
#include "spillover/errors.hpp"
#include "test_support.hpp"

using namespace spillover;
using namespace spillover::testing;

namespace {

ObjectiveContext random_context(std::uint64_t seed, int n, int T, int Q, int Kp, int R) {
  const SimulationDesign d = small_design(n, T, Q, Kp, 2, seed);
  const SimulatedTruth truth = simulate(d);
  return ObjectiveContext::make(truth.panel, d.weights, R);
}

ParamVector random_theta(SplitMix64& rng, const ObjectiveContext& ctx, double scale = 0.5) {
  ParamVector theta;
  theta.rho = random_admissible_rho(rng, ctx.weights, ctx.tau);
  theta.delta = scale * random_matrix(rng, ctx.data.Kstar(), 1).col(0);
  theta.phi = 0.2 * scale * random_matrix(rng, ctx.data.n_phi(), 1).col(0);
  return theta;
}

}  // namespace

// ---------------------------------------------------------------------------
// sigma2_profile and the concentrated trailing-eigenvalue path
// ---------------------------------------------------------------------------

TEST_CASE("profile variance with a full-span loading space is zero") {
  ObjectiveContext ctx = random_context(3, 6, 5, 2, 1, 1);
  SplitMix64 rng(4);
  const ParamVector theta = random_theta(rng, ctx);
  const Matrix full = random_matrix(rng, 6, 6);  // spans R^n almost surely
  CHECK(sigma2_profile(theta, full, ctx) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
}

TEST_CASE("profile variance with no loadings is the scaled Frobenius norm") {
  ObjectiveContext ctx = random_context(5, 6, 5, 2, 1, 1);
  SplitMix64 rng(6);
  const ParamVector theta = random_theta(rng, ctx);
  const Matrix E = residual_matrix(theta, ctx.data, ctx.weights);
  const double expected = E.squaredNorm() / 30.0;
  CHECK(sigma2_profile(theta, Matrix::Zero(6, 0), ctx) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("concentration equivalence: trailing sum = profile at the eigenbasis") {
  SplitMix64 rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 6 + 2 * (rep % 3);
    const int T = 5 + (rep % 2);
    const int R = rep % 3;
    ObjectiveContext ctx = random_context(100 + rep, n, T, 2, 2, R);
    const ParamVector theta = random_theta(rng, ctx);

    const auto conc = concentrated_value_unpenalized(theta, ctx);
    const FactorEstimate fe = recover_factor_estimate(theta, ctx);
    CHECK(conc.sigma2 == doctest::Approx(fe.sigma2_hat).epsilon(1e-12));

    // the eigenbasis attains the value and no random space beats it
    const double at_basis = sigma2_profile(theta, fe.Lambda_basis, ctx);
    CHECK(std::abs(at_basis - conc.sigma2) < 1e-10);
    for (int probe = 0; probe < 5; ++probe) {
      const Matrix L = random_matrix(rng, n, std::max(R, 1));
      const double v = sigma2_profile(theta, R == 0 ? Matrix::Zero(n, 0) : L, ctx);
      CHECK(v >= conc.sigma2 - 1e-10);
    }
  }
}

TEST_CASE("dual-Gram equality on both sides") {
  ObjectiveContext ctx = random_context(12, 8, 6, 2, 2, 2);
  SplitMix64 rng(13);
  const ParamVector theta = random_theta(rng, ctx);
  const Matrix E = residual_matrix(theta, ctx.data, ctx.weights);
  const double nT = 48.0;
  Eigen::SelfAdjointEigenSolver<Matrix> big((E * E.transpose()) / nT);
  Eigen::SelfAdjointEigenSolver<Matrix> small((E.transpose() * E) / nT);
  for (int r = 0; r < 2; ++r) {
    const double mu_n = big.eigenvalues()[7 - r];
    const double mu_T = small.eigenvalues()[5 - r];
    CHECK(mu_n == doctest::Approx(mu_T).epsilon(1e-10));
  }
  // trailing sum via trace-minus-top equals the n-side eigenvalue tail
  const auto conc = concentrated_value_unpenalized(theta, ctx);
  double tail = 0;
  for (int i = 0; i < 6; ++i) tail += big.eigenvalues()[i];
  CHECK(conc.sigma2 == doctest::Approx(tail).epsilon(1e-9));
}

TEST_CASE("R = 0, rho = 0, no penalty matches the closed form") {
  ObjectiveContext ctx = random_context(17, 6, 5, 2, 2, 0);
  SplitMix64 rng(18);
  ParamVector theta = random_theta(rng, ctx);
  theta.rho.setZero();
  const auto conc = concentrated_value(theta, ctx);
  const Matrix E = residual_matrix(theta, ctx.data, ctx.weights);
  CHECK(conc.objective == doctest::Approx(-0.5 * std::log(E.squaredNorm() / 30.0)).epsilon(1e-12));
}

TEST_CASE("penalty with zero gammas leaves the objective unchanged") {
  const SimulationDesign d = small_design(6, 5, 2, 1, 1, 23);
  const SimulatedTruth truth = simulate(d);
  SplitMix64 rng(24);

  PenaltyConfig pen = PenaltyConfig::none(2, d.theta0.P());
  pen.omega = Vector::Ones(d.theta0.P());
  ObjectiveContext plain = ObjectiveContext::make(truth.panel, d.weights, 1);
  ObjectiveContext withpen = ObjectiveContext::make(truth.panel, d.weights, 1, pen);
  const ParamVector theta = random_theta(rng, plain);
  CHECK(concentrated_value(theta, withpen).objective ==
        doctest::Approx(concentrated_value(theta, plain).objective).epsilon(1e-15));
}

TEST_CASE("sigma2 is non-increasing in R") {
  SplitMix64 rng(29);
  ObjectiveContext ctx = random_context(31, 8, 7, 2, 2, 0);
  const ParamVector theta = random_theta(rng, ctx);
  double prev = std::numeric_limits<double>::infinity();
  for (int R = 0; R < 6; ++R) {
    const auto conc = concentrated_value_unpenalized(theta, ctx.with(R, std::nullopt));
    CHECK(conc.sigma2 <= prev + 1e-12);
    prev = conc.sigma2;
  }
}

TEST_CASE("overfit trailing sum raises a degeneracy error") {
  // An all-zero panel has exactly zero residuals at theta = 0.
  PanelData data;
  data.n = 5;
  data.T = 4;
  data.Y = Matrix::Zero(5, 4);
  data.X_star.push_back(Matrix::Zero(5, 4));
  WeightsSet set = path_set(5, 1);
  assemble_derived(data, set);
  ObjectiveContext ctx = ObjectiveContext::make(data, set, 0);
  CHECK_THROWS_AS(concentrated_value(ParamVector::zeros(1, 1, 0), ctx), NumericDegenerateError);
}

// ---------------------------------------------------------------------------
// recover_factor_estimate
// ---------------------------------------------------------------------------

TEST_CASE("rank-one residual recovers its left factor") {
  // Build a panel whose residual at theta = 0 is exactly u v'.
  SplitMix64 rng(41);
  const int n = 6, T = 5;
  Vector u = random_matrix(rng, n, 1).col(0).normalized();
  Vector v = random_matrix(rng, T, 1).col(0);

  PanelData data;
  data.n = n;
  data.T = T;
  data.Y = u * v.transpose();
  data.X_star.push_back(random_matrix(rng, n, T));
  WeightsSet set = path_set(n, 1);
  assemble_derived(data, set);
  ObjectiveContext ctx = ObjectiveContext::make(data, set, 1);

  const ParamVector zero = ParamVector::zeros(1, 1, 0);
  const FactorEstimate fe = recover_factor_estimate(zero, ctx);
  CHECK(std::abs(std::abs(fe.Lambda_basis.col(0).dot(u)) - 1.0) < 1e-10);
  CHECK(fe.sigma2_hat == doctest::Approx(0.0).scale(1).epsilon(1e-12));
}

TEST_CASE("recovered projector beats every eigen-subset at n = 6") {
  SplitMix64 rng(43);
  ObjectiveContext ctx = random_context(47, 6, 5, 1, 1, 2);
  const ParamVector theta = random_theta(rng, ctx);
  const Matrix E = residual_matrix(theta, ctx.data, ctx.weights);
  Eigen::SelfAdjointEigenSolver<Matrix> es((E * E.transpose()) / 30.0);

  // exhaustive rank-2 eigen-subset search
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 6; ++a) {
    for (int b = a + 1; b < 6; ++b) {
      Matrix L(6, 2);
      L.col(0) = es.eigenvectors().col(a);
      L.col(1) = es.eigenvectors().col(b);
      best = std::min(best, sigma2_profile(theta, L, ctx));
    }
  }
  const FactorEstimate fe = recover_factor_estimate(theta, ctx);
  CHECK(fe.sigma2_hat == doctest::Approx(best).epsilon(1e-10));
}

TEST_CASE("R = 0 estimate is empty with the full residual variance") {
  ObjectiveContext ctx = random_context(53, 5, 4, 1, 1, 0);
  const ParamVector zero = ParamVector::zeros(1, 1, 1);
  const FactorEstimate fe = recover_factor_estimate(zero, ctx);
  CHECK(fe.Lambda_basis.cols() == 0);
  CHECK(fe.F_hat.cols() == 0);
  const Matrix E = residual_matrix(zero, ctx.data, ctx.weights);
  CHECK(fe.sigma2_hat == doctest::Approx(E.squaredNorm() / 20.0).epsilon(1e-12));
}

TEST_CASE("factor basis is orthonormal and F = E' basis") {
  SplitMix64 rng(59);
  ObjectiveContext ctx = random_context(61, 7, 9, 2, 1, 3);  // T > n side
  const ParamVector theta = random_theta(rng, ctx);
  const FactorEstimate fe = recover_factor_estimate(theta, ctx);
  const Matrix gram = fe.Lambda_basis.transpose() * fe.Lambda_basis;
  CHECK((gram - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
  const Matrix E = residual_matrix(theta, ctx.data, ctx.weights);
  CHECK((fe.F_hat - E.transpose() * fe.Lambda_basis).cwiseAbs().maxCoeff() < 1e-12);
}

// ---------------------------------------------------------------------------
// smooth_gradient
// ---------------------------------------------------------------------------

namespace {

double max_rel_gradient_error(const ParamVector& theta, const ObjectiveContext& ctx) {
  const GradientResult g = smooth_gradient(theta, ctx);
  const Vector x0 = theta.stacked();
  const double step = 1e-6;
  double worst = 0;
  for (int p = 0; p < x0.size(); ++p) {
    Vector hi = x0, lo = x0;
    hi[p] += step;
    lo[p] -= step;
    const double vh =
        concentrated_value_unpenalized(ParamVector::from_stacked(hi, theta.Q(), theta.Kstar()), ctx)
            .objective;
    const double vl =
        concentrated_value_unpenalized(ParamVector::from_stacked(lo, theta.Q(), theta.Kstar()), ctx)
            .objective;
    const double fd = (vh - vl) / (2 * step);
    worst = std::max(worst, std::abs(g.grad[p] - fd) / std::max({1.0, std::abs(fd)}));
  }
  return worst;
}

}  // namespace

TEST_CASE("analytic gradient matches central differences at random points") {
  SplitMix64 rng(67);
  for (int rep = 0; rep < 8; ++rep) {
    ObjectiveContext ctx = random_context(70 + rep, 8, 6, 2, 2, rep % 3);
    const ParamVector theta = random_theta(rng, ctx);
    CHECK(max_rel_gradient_error(theta, ctx) < 1e-5);
  }
}

TEST_CASE("gradient pushes beta toward the data when far from scale") {
  ObjectiveContext ctx = random_context(79, 6, 5, 1, 1, 0);
  ParamVector theta = ParamVector::zeros(1, 1, 1);
  theta.delta[0] = -100.0;  // far below the least-squares value
  const GradientResult g = smooth_gradient(theta, ctx);
  // finite-difference sign oracle
  ParamVector bumped = theta;
  bumped.delta[0] += 1e-5;
  const double up = concentrated_value_unpenalized(bumped, ctx).objective -
                    concentrated_value_unpenalized(theta, ctx).objective;
  CHECK(g.grad[1] * up > 0);
  CHECK(g.grad[1] > 0);  // ascending toward the least-squares direction
}

TEST_CASE("degenerate eigen-gap falls back to finite differences") {
  // Residual with a repeated top eigenvalue at theta = 0: Y diagonal with
  // equal singular values.
  const int n = 5, T = 4;
  PanelData data;
  data.n = n;
  data.T = T;
  data.Y = Matrix::Zero(n, T);
  data.Y(0, 0) = 2.0;
  data.Y(1, 1) = 2.0;  // mu_1 = mu_2 exactly
  data.Y(2, 2) = 0.5;
  SplitMix64 rng(83);
  data.X_star.push_back(random_matrix(rng, n, T, 0.01));
  WeightsSet set = path_set(n, 1);
  assemble_derived(data, set);
  ObjectiveContext ctx = ObjectiveContext::make(data, set, 1);
  const GradientResult g = smooth_gradient(ParamVector::zeros(1, 1, 0), ctx);
  CHECK(g.used_finite_difference);
}
