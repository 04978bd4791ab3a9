#include "spillover/objective.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "spillover/errors.hpp"

namespace spillover {

namespace {

constexpr double kSigma2Floor = 1e-300;
constexpr double kGapTol = 1e-12;  // relative eigen-gap below which the basis is ambiguous
constexpr double kFdStep = 1e-6;

Matrix residual_cached(const ParamVector& theta, const ObjectiveContext& ctx) {
  Matrix E = ctx.data.Y;
  for (int q = 0; q < theta.Q(); ++q) {
    if (theta.rho[q] != 0.0) E.noalias() -= theta.rho[q] * ctx.WY[q];
  }
  const Vector b = theta.beta();
  for (int k = 0; k < ctx.data.K(); ++k) {
    if (b[k] != 0.0) E.noalias() -= b[k] * ctx.data.derived[k];
  }
  return E;
}

struct GramSpectrum {
  Vector eigenvalues;  // descending, of the smaller Gram of E / nT
  double trace = 0.0;
};

GramSpectrum gram_spectrum(const Matrix& E, int n, int T) {
  GramSpectrum out;
  const double nT = static_cast<double>(n) * T;
  Matrix C;
  if (T <= n) {
    C.noalias() = (E.transpose() * E) / nT;
  } else {
    C.noalias() = (E * E.transpose()) / nT;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(C, Eigen::EigenvaluesOnly);
  out.eigenvalues = es.eigenvalues().reverse();
  out.trace = C.trace();
  return out;
}

double trailing_sum(const GramSpectrum& spec, int R) {
  double top = 0;
  for (int r = 0; r < R; ++r) top += spec.eigenvalues[r];
  return spec.trace - top;
}

}  // namespace

ObjectiveContext ObjectiveContext::make(PanelData data, WeightsSet weights, int R,
                                        std::optional<PenaltyConfig> penalty, double tau) {
  if (R < 0 || R >= std::min(data.n, data.T)) {
    throw InvalidArgumentError("factor count R must satisfy 0 <= R < min{n,T}");
  }
  ObjectiveContext ctx;
  ctx.data = std::move(data);
  ctx.weights = std::move(weights);
  if (ctx.weights.size() == 0) ctx.weights.empty_n = ctx.data.n;
  ctx.R = R;
  ctx.penalty = std::move(penalty);
  ctx.tau = tau;
  if (ctx.data.derived.empty()) assemble_derived(ctx.data, ctx.weights);
  ctx.rho_bound = rho_l1_bound(ctx.weights, tau);
  ctx.WY.reserve(ctx.weights.size());
  for (int q = 0; q < ctx.weights.size(); ++q) ctx.WY.push_back(ctx.weights[q] * ctx.data.Y);

  const double nT = static_cast<double>(ctx.data.n) * ctx.data.T;
  ctx.data_scale = Vector::Zero(ctx.P());
  ctx.logdet_curvature = Vector::Zero(ctx.P());
  for (int q = 0; q < ctx.Q(); ++q) {
    ctx.data_scale[q] = ctx.WY[q].squaredNorm() / nT;
    ctx.logdet_curvature[q] =
        ctx.weights[q].cwiseProduct(ctx.weights[q].transpose()).sum() / ctx.data.n;
  }
  for (int k = 0; k < ctx.data.K(); ++k) {
    ctx.data_scale[ctx.Q() + k] = ctx.data.derived[k].squaredNorm() / nT;
  }
  return ctx;
}

ObjectiveContext ObjectiveContext::with(int R_new, std::optional<PenaltyConfig> penalty_new) const {
  if (R_new < 0 || R_new >= std::min(data.n, data.T)) {
    throw InvalidArgumentError("factor count R must satisfy 0 <= R < min{n,T}");
  }
  ObjectiveContext ctx = *this;
  ctx.R = R_new;
  ctx.penalty = std::move(penalty_new);
  return ctx;
}

double sigma2_profile(const ParamVector& theta, const Matrix& Lambda, const ObjectiveContext& ctx) {
  const Matrix E = residual_cached(theta, ctx);
  const Projector proj = projector_from(Lambda);
  const Matrix ME = proj.apply_M(E);
  return E.cwiseProduct(ME).sum() / (static_cast<double>(ctx.data.n) * ctx.data.T);
}

ConcentratedValue concentrated_value_unpenalized(const ParamVector& theta,
                                                 const ObjectiveContext& ctx) {
  const double log_det = log_det_spatial_filter(theta.rho, ctx.weights);
  const Matrix E = residual_cached(theta, ctx);
  const auto spec = gram_spectrum(E, ctx.data.n, ctx.data.T);
  const double sigma2 = trailing_sum(spec, ctx.R);
  if (!(sigma2 > kSigma2Floor)) {
    throw NumericDegenerateError("trailing eigenvalue sum is not positive: R too large for the data");
  }
  ConcentratedValue out;
  out.sigma2 = sigma2;
  out.objective = log_det / ctx.data.n - 0.5 * std::log(sigma2);
  return out;
}

ConcentratedValue concentrated_value(const ParamVector& theta, const ObjectiveContext& ctx) {
  ConcentratedValue out = concentrated_value_unpenalized(theta, ctx);
  if (ctx.penalty) out.objective -= penalty_value(theta, *ctx.penalty);
  return out;
}

FactorEstimate recover_factor_estimate(const ParamVector& theta, const ObjectiveContext& ctx) {
  const int n = ctx.data.n;
  const int T = ctx.data.T;
  const int R = ctx.R;
  const double nT = static_cast<double>(n) * T;
  const Matrix E = residual_cached(theta, ctx);

  FactorEstimate fe;
  if (R == 0) {
    fe.Lambda_basis = Matrix::Zero(n, 0);
    fe.F_hat = Matrix::Zero(T, 0);
    fe.sigma2_hat = E.squaredNorm() / nT;
    return fe;
  }

  // Eigenvectors from the smaller Gram; the T-side route maps v -> Ev and
  // needs strictly positive eigenvalues, otherwise use the n-side directly.
  Vector mu;  // descending eigenvalues
  bool built = false;
  if (T < n) {
    Matrix C = (E.transpose() * E) / nT;
    Eigen::SelfAdjointEigenSolver<Matrix> es(C);
    mu = es.eigenvalues().reverse();
    const double tol = std::max(mu[0], 0.0) * 1e-14;
    if (mu[R - 1] > tol) {
      fe.Lambda_basis.resize(n, R);
      for (int r = 0; r < R; ++r) {
        const Vector v = es.eigenvectors().col(T - 1 - r);
        fe.Lambda_basis.col(r) = (E * v) / std::sqrt(nT * mu[r]);
      }
      built = true;
    }
  }
  if (!built) {
    Matrix C = (E * E.transpose()) / nT;
    Eigen::SelfAdjointEigenSolver<Matrix> es(C);
    mu = es.eigenvalues().reverse();
    fe.Lambda_basis.resize(n, R);
    for (int r = 0; r < R; ++r) fe.Lambda_basis.col(r) = es.eigenvectors().col(n - 1 - r);
  }

  fe.F_hat = E.transpose() * fe.Lambda_basis;
  double top = 0;
  for (int r = 0; r < R; ++r) top += mu[r];
  // Trace of the full Gram, not just the computed side's leading block.
  fe.sigma2_hat = E.squaredNorm() / nT - top;
  if (R < static_cast<int>(mu.size()) && mu[0] > 0) {
    fe.degenerate_gap = (mu[R - 1] - mu[R]) < kGapTol * mu[0];
  }
  return fe;
}

namespace {

Vector finite_difference_gradient(const ParamVector& theta, const ObjectiveContext& ctx) {
  const Vector x0 = theta.stacked();
  Vector g(x0.size());
  for (int p = 0; p < x0.size(); ++p) {
    Vector hi = x0, lo = x0;
    hi[p] += kFdStep;
    lo[p] -= kFdStep;
    const auto vh = concentrated_value_unpenalized(
        ParamVector::from_stacked(hi, theta.Q(), theta.Kstar()), ctx);
    const auto vl = concentrated_value_unpenalized(
        ParamVector::from_stacked(lo, theta.Q(), theta.Kstar()), ctx);
    g[p] = (vh.objective - vl.objective) / (2 * kFdStep);
  }
  return g;
}

}  // namespace

GradientResult smooth_gradient(const ParamVector& theta, const ObjectiveContext& ctx) {
  const int n = ctx.data.n;
  const int T = ctx.data.T;
  const double nT = static_cast<double>(n) * T;

  const FactorEstimate fe = recover_factor_estimate(theta, ctx);
  GradientResult out;
  if (fe.degenerate_gap) {
    out.grad = finite_difference_gradient(theta, ctx);
    out.used_finite_difference = true;
    return out;
  }
  const double sigma2 = fe.sigma2_hat;
  if (!(sigma2 > kSigma2Floor)) {
    throw NumericDegenerateError("trailing eigenvalue sum is not positive in gradient");
  }

  const Matrix E = residual_cached(theta, ctx);
  Matrix ME = E;
  if (fe.Lambda_basis.cols() > 0) {
    ME.noalias() -= fe.Lambda_basis * (fe.Lambda_basis.transpose() * E);
  }

  const Matrix S = spatial_filter(theta.rho, ctx.weights);
  Eigen::PartialPivLU<Matrix> lu(S);
  if (std::abs(lu.determinant()) < 1e-300) {
    throw InadmissibleParameterError("spatial filter singular in gradient");
  }
  const Matrix S_inv = lu.solve(Matrix::Identity(n, n));

  out.grad.resize(ctx.P());
  const double scale = 1.0 / (nT * sigma2);
  for (int q = 0; q < ctx.Q(); ++q) {
    const double tr_G = ctx.weights[q].cwiseProduct(S_inv.transpose()).sum();
    out.grad[q] = -tr_G / n + scale * ctx.WY[q].cwiseProduct(ME).sum();
  }
  for (int k = 0; k < ctx.data.K(); ++k) {
    out.grad[ctx.Q() + k] = scale * ctx.data.derived[k].cwiseProduct(ME).sum();
  }
  return out;
}

}  // namespace spillover
