#include "spillover/optimizer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "spillover/errors.hpp"
#include "spillover/rng.hpp"

namespace spillover {

namespace {

constexpr double kStepFloor = 1e-16;

double eval_or_nan(const ParamVector& theta, const ObjectiveContext& ctx, double* sigma2) {
  try {
    const auto v = concentrated_value(theta, ctx);
    if (sigma2) *sigma2 = v.sigma2;
    return v.objective;
  } catch (const InadmissibleParameterError&) {
    return std::numeric_limits<double>::quiet_NaN();
  } catch (const NumericDegenerateError&) {
    // Vanishing residual variance: a perfect fit, the supremum of the
    // log-likelihood. Treat as +inf so noiseless data converges cleanly.
    if (sigma2) *sigma2 = 0.0;
    return std::numeric_limits<double>::infinity();
  }
}

std::vector<int> support_of(const ParamVector& theta) {
  std::vector<int> s;
  const Vector v = theta.stacked();
  for (int p = 0; p < v.size(); ++p) {
    if (v[p] != 0.0) s.push_back(p);
  }
  return s;
}

class TraceSink {
 public:
  explicit TraceSink(const std::string& path) {
    if (!path.empty()) out_.open(path);
  }
  void record(int iter, double objective, double step, int support_size) {
    if (!out_.is_open()) return;
    nlohmann::json j{{"iteration", iter},
                     {"objective", objective},
                     {"step", step},
                     {"support", support_size}};
    out_ << j.dump() << '\n';
  }

 private:
  std::ofstream out_;
};

/// Weighted-lasso coordinate descent on the quadratic surrogate: maximize
///   glin' c - (c' H c - 2 w' c) / (2 s0) - sum_p gamma_p omega_p |c_p|
/// where H, w describe the basis-projected residual variance (quadratic in
/// all coordinates jointly, since the residual is linear in them) and glin
/// carries the linearized log-determinant gradient on the rho block.
/// Improving the surrogate improves the true concentrated objective when the
/// log-det linearization error is small; callers verify acceptance.
Vector quadratic_coordinate_descent(const Vector& c0, const Matrix& H, const Vector& w,
                                    const Vector& glin, const PenaltyConfig& penalty, double s0) {
  const int P = static_cast<int>(c0.size());
  Vector c = c0;
  Vector resid_grad = H * c - w;  // gradient of the quadratic part
  for (int pass = 0; pass < 200; ++pass) {
    double move = 0;
    for (int p = 0; p < P; ++p) {
      if (penalty.frozen[p]) {
        if (c[p] != 0.0) {
          resid_grad -= c[p] * H.col(p);
          c[p] = 0.0;
        }
        continue;
      }
      if (H(p, p) <= 1e-14) continue;  // direction projected away entirely
      const double raw = c[p] - (resid_grad[p] - s0 * glin[p]) / H(p, p);
      const double thr = penalty.threshold(p, s0) / H(p, p);
      double next = 0.0;
      if (raw > thr) {
        next = raw - thr;
      } else if (raw < -thr) {
        next = raw + thr;
      }
      if (next != c[p]) {
        resid_grad += (next - c[p]) * H.col(p);
        move = std::max(move, std::abs(next - c[p]));
        c[p] = next;
      }
    }
    if (move < 1e-12) break;
  }
  return c;
}

struct QuadraticModel {
  Matrix H;     // P x P Gram of the basis-projected regressors / nT
  Vector w;     // projected cross moments with Y / nT
  Vector glin;  // gradient of (1/n) log det S on the rho block, zero elsewhere
};

/// The residual is Y - sum_q rho_q (W_q Y) - sum_k beta_k X_k: linear in the
/// stacked coefficients over the regressor list (W_q Y ..., X_k ...).
QuadraticModel full_quadratic(const Vector& rho0, const Matrix& basis,
                              const ObjectiveContext& ctx) {
  const int Q = ctx.Q();
  const int P = ctx.P();
  const int n = ctx.data.n;
  const double nT = static_cast<double>(n) * ctx.data.T;

  auto regressor = [&](int p) -> const Matrix& {
    return p < Q ? ctx.WY[p] : ctx.data.derived[p - Q];
  };
  auto project = [&](const Matrix& X) -> Matrix {
    if (basis.cols() == 0) return X;
    return X - basis * (basis.transpose() * X);
  };

  QuadraticModel m;
  m.H.resize(P, P);
  m.w.resize(P);
  m.glin = Vector::Zero(P);
  std::vector<Matrix> MR(P);
  for (int p = 0; p < P; ++p) MR[p] = project(regressor(p));
  const Matrix MY = project(ctx.data.Y);
  for (int p = 0; p < P; ++p) {
    m.w[p] = MR[p].cwiseProduct(MY).sum() / nT;
    for (int r = p; r < P; ++r) {
      m.H(p, r) = m.H(r, p) = MR[p].cwiseProduct(MR[r]).sum() / nT;
    }
  }
  if (Q > 0) {
    const Matrix S = spatial_filter(rho0, ctx.weights);
    Eigen::PartialPivLU<Matrix> lu(S);
    if (std::abs(lu.determinant()) >= 1e-300) {
      const Matrix S_inv = lu.solve(Matrix::Identity(n, n));
      for (int q = 0; q < Q; ++q) {
        m.glin[q] = -ctx.weights[q].cwiseProduct(S_inv.transpose()).sum() / n;
      }
    }
  }
  return m;
}

/// One monotone ascent run: alternate an exact or soft-thresholded
/// coordinate-descent update of the beta block (given the concentrated
/// loading basis) with a preconditioned proximal-gradient step on rho.
/// Every move is accepted only if the true penalized concentrated objective
/// increases, so the recorded trace is nondecreasing.
OptimizerResult ascend(const ObjectiveContext& ctx, const PenaltyConfig& penalty,
                       const OptimizerConfig& cfg, const ParamVector& theta_init) {
  const int Q = ctx.Q();
  const int Kstar = ctx.data.Kstar();
  const int K = ctx.data.K();

  ObjectiveContext eval_ctx = ctx;
  eval_ctx.penalty = penalty;

  OptimizerResult res;
  res.theta_hat = theta_init;
  double sigma2 = 0;
  double obj = eval_or_nan(theta_init, eval_ctx, &sigma2);
  if (std::isnan(obj)) {
    throw OptimizationFailureError("initial point is inadmissible");
  }
  res.objective_trace.push_back(obj);

  TraceSink trace(cfg.trace_path);
  trace.record(0, obj, 0.0, static_cast<int>(support_of(theta_init).size()));

  const auto rho_precondition = [&](double s2) {
    Vector h = ctx.logdet_curvature.head(Q);
    if (s2 > 0) h += ctx.data_scale.head(Q) / s2;
    return Vector(h.cwiseMax(1e-8));
  };

  double step = cfg.step_init;
  ParamVector theta = theta_init;
  for (int iter = 1; iter <= cfg.max_iterations && std::isfinite(obj); ++iter) {
    res.iterations_used = iter;
    const Vector before = theta.stacked();
    const double obj_before = obj;

    // Joint coordinate-descent jump on the quadratic surrogate at the
    // current concentrating basis, majorized at the current sigma2. The
    // log-det linearization is not a global bound, so the jump only lands
    // if the true objective confirms it.
    bool jumped = false;
    const FactorEstimate fe = recover_factor_estimate(theta, ctx);
    const QuadraticModel qm = full_quadratic(theta.rho, fe.Lambda_basis, ctx);
    {
      Vector c = quadratic_coordinate_descent(theta.stacked(), qm.H, qm.w, qm.glin, penalty,
                                              fe.sigma2_hat);
      if (Q > 0 && ctx.rho_bound > 0) {
        const double l1 = c.head(Q).cwiseAbs().sum();
        if (l1 > ctx.rho_bound) c.head(Q) *= ctx.rho_bound / l1;
      }
      ParamVector cand = ParamVector::from_stacked(c, Q, Kstar);
      double cand_sigma2 = 0;
      const double cand_obj = eval_or_nan(cand, eval_ctx, &cand_sigma2);
      if (!std::isnan(cand_obj) && cand_obj >= obj) {
        jumped = (cand.stacked() - before).cwiseAbs().maxCoeff() > 0;
        theta = std::move(cand);
        obj = cand_obj;
        sigma2 = cand_sigma2;
      }
    }

    // Fallback when the jump failed: beta block alone (its surrogate is a
    // true minorant), then a preconditioned prox-gradient step on rho.
    if (!jumped) {
      if (K > 0) {
        // CD restricted to beta: rho coordinates stay fixed and act as an
        // offset inside the quadratic gradient.
        const Vector c = theta.stacked();
        Vector c_new = c;
        {
          Vector resid_grad = qm.H * c - qm.w;
          for (int pass = 0; pass < 200; ++pass) {
            double move = 0;
            for (int p = Q; p < ctx.P(); ++p) {
              if (penalty.frozen[p]) {
                if (c_new[p] != 0.0) {
                  resid_grad -= c_new[p] * qm.H.col(p);
                  c_new[p] = 0.0;
                }
                continue;
              }
              if (qm.H(p, p) <= 1e-14) continue;
              const double raw = c_new[p] - resid_grad[p] / qm.H(p, p);
              const double thr = penalty.threshold(p, fe.sigma2_hat) / qm.H(p, p);
              double next = 0.0;
              if (raw > thr) {
                next = raw - thr;
              } else if (raw < -thr) {
                next = raw + thr;
              }
              if (next != c_new[p]) {
                resid_grad += (next - c_new[p]) * qm.H.col(p);
                move = std::max(move, std::abs(next - c_new[p]));
                c_new[p] = next;
              }
            }
            if (move < 1e-12) break;
          }
        }
        ParamVector cand = ParamVector::from_stacked(c_new, Q, Kstar);
        double cand_sigma2 = 0;
        const double cand_obj = eval_or_nan(cand, eval_ctx, &cand_sigma2);
        if (!std::isnan(cand_obj) && cand_obj >= obj) {
          theta = std::move(cand);
          obj = cand_obj;
          sigma2 = cand_sigma2;
        }
      }
      if (Q > 0) {
        const GradientResult g = smooth_gradient(theta, ctx);
        const Vector h = rho_precondition(sigma2);
        double s = step;
        while (s >= kStepFloor) {
          Vector moved = theta.stacked();
          Vector s_coord = Vector::Zero(ctx.P());
          for (int q = 0; q < Q; ++q) {
            s_coord[q] = s / h[q];
            moved[q] += s_coord[q] * g.grad[q];
          }
          // Only the rho coordinates move; keep beta thresholds inert.
          for (int p = Q; p < ctx.P(); ++p) s_coord[p] = 1e-300;
          ParamVector cand = ParamVector::from_stacked(
              prox_step(moved, s_coord, penalty, ctx.rho_bound), Q, Kstar);
          double cand_sigma2 = 0;
          const double cand_obj = eval_or_nan(cand, eval_ctx, &cand_sigma2);
          if (!std::isnan(cand_obj) && cand_obj > obj) {
            theta = std::move(cand);
            obj = cand_obj;
            sigma2 = cand_sigma2;
            res.final_step = s;
            step = std::min(cfg.step_init, s / cfg.backtrack_factor);
            break;
          }
          s *= cfg.backtrack_factor;
        }
        if (s < kStepFloor) res.final_step = s;
      }
    }

    const double gain = obj - obj_before;
    const double move = (theta.stacked() - before).cwiseAbs().maxCoeff();
    res.objective_trace.push_back(obj);
    trace.record(iter, obj, res.final_step, static_cast<int>(support_of(theta).size()));
    if (gain < cfg.objective_tolerance && move < 10 * cfg.objective_tolerance) {
      res.converged = true;
      break;
    }
  }

  // Polish with full-vector preconditioned prox-gradient steps until the
  // solution sits on a prox fixed point of the final step size.
  if (std::isfinite(obj)) {
    double s = std::max(res.final_step, cfg.step_init);
    for (int polish = 0; polish < 500; ++polish) {
      const GradientResult g = smooth_gradient(theta, ctx);
      Vector h = ctx.logdet_curvature;
      if (sigma2 > 0) h += ctx.data_scale / sigma2;
      h = h.cwiseMax(1e-8);

      bool accepted = false;
      while (s >= kStepFloor) {
        const Vector s_coord = s * h.cwiseInverse();
        const Vector moved = theta.stacked() + s_coord.cwiseProduct(g.grad);
        ParamVector cand =
            ParamVector::from_stacked(prox_step(moved, s_coord, penalty, ctx.rho_bound), Q, Kstar);
        const double displacement = (cand.stacked() - theta.stacked()).cwiseAbs().maxCoeff();
        double cand_sigma2 = 0;
        const double cand_obj = eval_or_nan(cand, eval_ctx, &cand_sigma2);
        if (!std::isnan(cand_obj) && cand_obj >= obj) {
          res.final_step = s;
          if (displacement < 10 * cfg.objective_tolerance) {
            accepted = false;  // already a fixed point at this step size
          } else {
            theta = std::move(cand);
            obj = cand_obj;
            sigma2 = cand_sigma2;
            res.objective_trace.push_back(obj);
            accepted = true;
          }
          break;
        }
        s *= cfg.backtrack_factor;
      }
      if (!accepted) break;
    }
  }
  if (std::isinf(obj)) res.converged = true;  // perfect fit, nothing to improve

  res.theta_hat = theta;
  res.objective = obj;
  res.sigma2 = sigma2;
  res.active_support = support_of(theta);
  return res;
}

OptimizerResult multistart(const ObjectiveContext& ctx, const PenaltyConfig& penalty,
                           const OptimizerConfig& cfg, const ParamVector& theta_init) {
  cfg.validate();
  std::vector<ParamVector> starts{theta_init};
  SplitMix64 rng(cfg.seed);
  for (int m = 1; m < cfg.multistart_count; ++m) {
    SplitMix64 sub = rng.split(static_cast<std::uint64_t>(m));
    ParamVector pert = theta_init;
    for (int q = 0; q < pert.rho.size(); ++q) {
      pert.rho[q] += 0.25 * ctx.rho_bound * sub.next_normal() / std::max(1, ctx.Q());
    }
    const double scale =
        1.0 + (theta_init.K() > 0 ? theta_init.beta().cwiseAbs().maxCoeff() : 0.0);
    for (int k = 0; k < pert.delta.size(); ++k) pert.delta[k] += 0.1 * scale * sub.next_normal();
    for (int j = 0; j < pert.phi.size(); ++j) pert.phi[j] += 0.05 * sub.next_normal();
    // Respect the frozen mask and the admissible region.
    Vector v = prox_step(pert.stacked(), 1.0, PenaltyConfig::none(ctx.Q(), ctx.P()), ctx.rho_bound);
    for (int p = 0; p < v.size(); ++p) {
      if (penalty.frozen[p]) v[p] = 0.0;
    }
    starts.push_back(ParamVector::from_stacked(v, ctx.Q(), ctx.data.Kstar()));
  }

  OptimizerResult best;
  bool have = false;
  std::string last_error;
  for (const auto& start : starts) {
    try {
      OptimizerResult r = ascend(ctx, penalty, cfg, start);
      if (!have || r.objective > best.objective) {
        best = std::move(r);
        have = true;
      }
    } catch (const OptimizationFailureError& e) {
      last_error = e.what();
    }
  }
  if (!have) {
    throw OptimizationFailureError("all starts failed admissibility: " + last_error);
  }
  return best;
}

}  // namespace

void OptimizerConfig::validate() const {
  if (objective_tolerance <= 0) throw InvalidArgumentError("objective_tolerance must be positive");
  if (backtrack_factor <= 0 || backtrack_factor >= 1) {
    throw InvalidArgumentError("backtrack_factor must lie in (0,1)");
  }
  if (step_init <= 0) throw InvalidArgumentError("step_init must be positive");
  if (max_iterations < 1) throw InvalidArgumentError("max_iterations must be positive");
  if (multistart_count < 1) throw InvalidArgumentError("multistart_count must be positive");
}

ParamVector default_init(const ObjectiveContext& ctx) {
  const int Q = ctx.Q();
  const int K = ctx.data.K();

  // Loading space from R principal components of the outcomes themselves.
  ParamVector zero = ParamVector::zeros(Q, ctx.data.Kstar(), ctx.data.n_phi());
  Matrix basis(ctx.data.n, 0);
  if (ctx.R > 0) {
    ObjectiveContext tmp = ctx;
    tmp.penalty.reset();
    basis = recover_factor_estimate(zero, tmp).Lambda_basis;
  }
  if (K == 0) return zero;

  const QuadraticModel qm = full_quadratic(zero.rho, basis, ctx);
  Matrix H = qm.H.bottomRightCorner(K, K);
  // Tiny ridge guards collinear covariates without moving well-posed fits.
  H.diagonal().array() += 1e-10 * std::max(1.0, H.trace() / K);
  const Vector beta = H.ldlt().solve(qm.w.tail(K));

  ParamVector init = zero;
  init.delta = beta.head(ctx.data.Kstar());
  init.phi = beta.tail(ctx.data.n_phi());
  return init;
}

OptimizerResult maximize_unpenalized(const ObjectiveContext& ctx, const OptimizerConfig& cfg,
                                     const ParamVector& theta_init) {
  ObjectiveContext plain = ctx;
  plain.penalty.reset();
  return multistart(plain, PenaltyConfig::none(ctx.Q(), ctx.P()), cfg, theta_init);
}

OptimizerResult maximize_unpenalized(const ObjectiveContext& ctx, const OptimizerConfig& cfg) {
  return maximize_unpenalized(ctx, cfg, default_init(ctx));
}

OptimizerResult maximize_penalized(const ObjectiveContext& ctx, const PenaltyConfig& penalty,
                                   const OptimizerConfig& cfg, const ParamVector& theta_init) {
  return multistart(ctx, penalty, cfg, theta_init);
}

std::pair<double, double> compute_gamma_bar(const ObjectiveContext& ctx,
                                            const PenaltyConfig& penalty_base,
                                            const OptimizerConfig& cfg,
                                            const ParamVector& theta_init) {
  OptimizerConfig one_shot = cfg;
  one_shot.multistart_count = 1;  // the search only needs support emptiness
  one_shot.trace_path.clear();

  ParamVector warm = theta_init;
  auto support_empty = [&](double g) {
    PenaltyConfig pen = penalty_base;
    pen.gamma_rho = g;
    pen.gamma_beta = g;
    const OptimizerResult r = maximize_penalized(ctx, pen, one_shot, warm);
    if (!r.active_support.empty()) warm = r.theta_hat;
    return r.active_support.empty();
  };

  if (support_empty(1e-12)) return {0.0, 0.0};

  double hi = 1.0;
  int doublings = 0;
  while (!support_empty(hi)) {
    hi *= 2.0;
    if (++doublings > 80) {
      throw OptimizationFailureError("gamma-bar bisection failed to bracket an empty support");
    }
  }
  // Push the lower edge down until the support is provably nonempty there.
  double lo = hi / 2.0;
  while (lo > 1e-12 && support_empty(lo)) {
    hi = lo;
    lo /= 2.0;
  }
  if (lo <= 1e-12) return {0.0, 0.0};
  while ((hi - lo) / hi > 0.05) {
    const double mid = 0.5 * (lo + hi);
    if (support_empty(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return {hi, hi};
}

}  // namespace spillover
