#include "spillover/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spillover/errors.hpp"

namespace spillover {

namespace {

constexpr double kTrailingFloor = 1e-300;

}  // namespace

GammaGrid log_gamma_grid(double bar_rho, double bar_beta, int points, double lo_frac) {
  if (points < 1) throw InvalidArgumentError("grid needs at least one point");
  if (lo_frac <= 0 || lo_frac >= 1) throw InvalidArgumentError("lo_frac must lie in (0,1)");
  auto block = [&](double bar) {
    std::vector<double> v;
    if (bar <= 0) {
      v.push_back(0.0);
      return v;
    }
    if (points == 1) {
      v.push_back(bar);
      return v;
    }
    for (int i = 0; i < points; ++i) {
      const double e = static_cast<double>(points - 1 - i) / (points - 1);
      v.push_back(bar * std::pow(lo_frac, e));
    }
    return v;
  };
  GammaGrid g;
  g.rho_values = block(bar_rho);
  g.beta_values = block(bar_beta);
  return g;
}

std::vector<FactorICVariant> standard_factor_ic_variants() {
  return {
      {"IC1", [](int n, int T) {
         const double m = std::min(n, T);
         return std::log(m) / m;
       }},
      {"IC2", [](int n, int T) {
         const double nT = static_cast<double>(n) * T;
         return (n + T) / nT * std::log(std::min(n, T));
       }},
      {"IC3", [](int n, int T) {
         const double nT = static_cast<double>(n) * T;
         return (n + T) / nT * std::log(nT / (n + T));
       }},
  };
}

double ic_star_penalty(int n, int T) {
  const double m = std::min(n, T);
  return std::log(m) / m;
}

IcStarFit ic_star_fit(double gamma_rho, double gamma_beta, const ObjectiveContext& ctx,
                      const PenaltyConfig& penalty_base, const OptimizerConfig& opt_cfg,
                      const ParamVector& theta_init) {
  PenaltyConfig pen = penalty_base;
  pen.gamma_rho = gamma_rho;
  pen.gamma_beta = gamma_beta;
  IcStarFit out;
  out.fit = maximize_penalized(ctx, pen, opt_cfg, theta_init);
  out.sigma2 = out.fit.sigma2;
  for (int p : out.fit.active_support) {
    (p < ctx.Q() ? out.support_rho : out.support_beta) += 1;
  }
  const double pen_level = ic_star_penalty(ctx.data.n, ctx.data.T);
  out.ic = out.sigma2 + pen_level * (out.support_rho + out.support_beta);
  return out;
}

double ic_star(double gamma_rho, double gamma_beta, const ObjectiveContext& ctx,
               const PenaltyConfig& penalty_base, const OptimizerConfig& opt_cfg,
               const ParamVector& theta_init) {
  return ic_star_fit(gamma_rho, gamma_beta, ctx, penalty_base, opt_cfg, theta_init).ic;
}

GammaSelection select_gamma(const GammaGrid& grid, const ObjectiveContext& ctx,
                            const PenaltyConfig& penalty_base, const OptimizerConfig& opt_cfg,
                            const ParamVector& theta_init) {
  const int nr = static_cast<int>(grid.rho_values.size());
  const int nb = static_cast<int>(grid.beta_values.size());
  if (nr == 0 || nb == 0) throw SelectionFailureError("gamma grid is empty");
  for (int i = 1; i < nr; ++i) {
    if (grid.rho_values[i] <= grid.rho_values[i - 1]) {
      throw InvalidArgumentError("gamma grid must be strictly increasing");
    }
  }
  for (int i = 1; i < nb; ++i) {
    if (grid.beta_values[i] <= grid.beta_values[i - 1]) {
      throw InvalidArgumentError("gamma grid must be strictly increasing");
    }
  }

  // Grid fits chain warm starts within a row; rows are independent so they
  // may run concurrently. Single-start fits here; the winner is re-fitted
  // with the caller's full multistart budget below.
  OptimizerConfig grid_cfg = opt_cfg;
  grid_cfg.multistart_count = 1;
  grid_cfg.trace_path.clear();

  std::vector<std::vector<IcStarFit>> fits(nr);
  std::vector<std::vector<bool>> ok(nr, std::vector<bool>(nb, false));
#pragma omp parallel for schedule(dynamic)
  for (int ir = 0; ir < nr; ++ir) {
    fits[ir].resize(nb);
    ParamVector warm = theta_init;
    for (int ib = nb - 1; ib >= 0; --ib) {  // sparsest first within the row
      try {
        fits[ir][ib] = ic_star_fit(grid.rho_values[ir], grid.beta_values[ib], ctx, penalty_base,
                                   grid_cfg, warm);
        warm = fits[ir][ib].fit.theta_hat;
        ok[ir][ib] = true;
      } catch (const std::exception&) {
        // leave the cell marked failed; the row chain continues from the
        // previous warm point
      }
    }
  }

  GammaSelection sel;
  int best_ir = -1, best_ib = -1;
  double best_ic = std::numeric_limits<double>::infinity();
  for (int ir = 0; ir < nr; ++ir) {
    for (int ib = 0; ib < nb; ++ib) {
      GammaTraceRow row;
      row.gamma_rho = grid.rho_values[ir];
      row.gamma_beta = grid.beta_values[ib];
      if (ok[ir][ib]) {
        const auto& f = fits[ir][ib];
        row.sigma2 = f.sigma2;
        row.support_rho = f.support_rho;
        row.support_beta = f.support_beta;
        row.ic = f.ic;
        if (f.ic < best_ic) {  // strict: lexicographically earlier wins ties
          best_ic = f.ic;
          best_ir = ir;
          best_ib = ib;
        }
      } else {
        row.ic = std::numeric_limits<double>::quiet_NaN();
      }
      sel.trace.push_back(row);
    }
  }
  if (best_ir < 0) throw SelectionFailureError("every gamma grid point failed");

  sel.gamma_rho = grid.rho_values[best_ir];
  sel.gamma_beta = grid.beta_values[best_ib];
  PenaltyConfig pen = penalty_base;
  pen.gamma_rho = sel.gamma_rho;
  pen.gamma_beta = sel.gamma_beta;
  sel.best_fit = maximize_penalized(ctx, pen, opt_cfg, fits[best_ir][best_ib].fit.theta_hat);
  return sel;
}

Matrix residual_factor_panel(const ParamVector& theta_check, const ObjectiveContext& ctx) {
  return residual_matrix(theta_check, ctx.data, ctx.weights);
}

double trailing_eigen_sum(const Matrix& M, int R) {
  const int n = static_cast<int>(M.rows());
  const int T = static_cast<int>(M.cols());
  if (R < 0 || R >= std::min(n, T)) {
    throw InvalidArgumentError("R must satisfy 0 <= R < min{n,T}");
  }
  const double nT = static_cast<double>(n) * T;
  Matrix C;
  if (T <= n) {
    C.noalias() = (M.transpose() * M) / nT;
  } else {
    C.noalias() = (M * M.transpose()) / nT;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(C, Eigen::EigenvaluesOnly);
  double top = 0;
  const auto& ev = es.eigenvalues();
  for (int r = 0; r < R; ++r) top += ev[ev.size() - 1 - r];
  return C.trace() - top;
}

double ic_factors(const Matrix& panel_resid, int R, const FactorICVariant& variant) {
  const int n = static_cast<int>(panel_resid.rows());
  const int T = static_cast<int>(panel_resid.cols());
  const double trailing = trailing_eigen_sum(panel_resid, R);
  // Exactly low-rank panels leave only roundoff in the tail; the criterion
  // needs genuine residual noise, so fail on a relative scale.
  const double total = panel_resid.squaredNorm() / (static_cast<double>(n) * T);
  if (!(trailing > std::max(kTrailingFloor, 1e-12 * total))) {
    throw NumericDegenerateError("trailing eigenvalue sum vanished at R = " + std::to_string(R) +
                                 "; the criterion needs residual noise");
  }
  return std::log(trailing) + variant.penalty_fn(n, T) * R;
}

std::map<std::string, int> select_num_factors(const Matrix& panel_resid, int R_max,
                                              const std::vector<FactorICVariant>& variants) {
  if (R_max < 0) throw InvalidArgumentError("R_max must be nonnegative");
  std::map<std::string, int> out;
  for (const auto& variant : variants) {
    int best_R = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int R = 0; R <= R_max; ++R) {
      const double ic = ic_factors(panel_resid, R, variant);
      if (ic < best) {  // strict: ties resolve toward the smaller R
        best = ic;
        best_R = R;
      }
    }
    out[variant.name] = best_R;
  }
  return out;
}

namespace {

template <typename Fn>
auto run_stage(int index, const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const InvalidArgumentError&) {
    throw;
  } catch (const std::exception& e) {
    throw SelectionFailureError("stage " + std::to_string(index) + " (" + name + "): " + e.what());
  }
}

}  // namespace

EstimationReport full_pipeline(const PanelData& data, const WeightsSet& weights, int R_max,
                               const PipelineConfig& cfg) {
  const int Q = weights.size();
  const int P = data.P(Q);
  if (static_cast<long long>(data.n) * data.T <= P) {
    throw InvalidArgumentError("pipeline requires nT > P");
  }
  const int R_use = cfg.fix_R >= 0 ? cfg.fix_R : R_max;

  EstimationReport rep;
  rep.n = data.n;
  rep.T = data.T;
  rep.Q = Q;
  rep.P = P;
  rep.R_max = R_max;

  ObjectiveContext ctx = ObjectiveContext::make(data, weights, R_use, std::nullopt, cfg.tau);

  // Stage 1: unpenalised pilot at the working factor count.
  const OptimizerResult pilot = run_stage(1, "pilot", [&] {
    return maximize_unpenalized(ctx, cfg.opt);
  });
  const Vector pilot_stacked = pilot.theta_hat.stacked();
  rep.theta_tilde.assign(pilot_stacked.data(), pilot_stacked.data() + pilot_stacked.size());

  // Stage 2: adaptive weights, penalty levels from IC*, penalised fit.
  PenaltyConfig pen_base = run_stage(2, "adaptive weights", [&] {
    return make_adaptive_weights(pilot.theta_hat, cfg.zeta);
  });
  GammaSelection sel = run_stage(2, "penalty selection", [&]() -> GammaSelection {
    if (cfg.gamma_rho_override >= 0 && cfg.gamma_beta_override >= 0) {
      GammaSelection s;
      s.gamma_rho = cfg.gamma_rho_override;
      s.gamma_beta = cfg.gamma_beta_override;
      PenaltyConfig pen = pen_base;
      pen.gamma_rho = s.gamma_rho;
      pen.gamma_beta = s.gamma_beta;
      s.best_fit = maximize_penalized(ctx, pen, cfg.opt, pilot.theta_hat);
      IcStarFit probe;
      probe.fit = s.best_fit;
      GammaTraceRow row{s.gamma_rho, s.gamma_beta, s.best_fit.sigma2, 0, 0, 0};
      for (int p : s.best_fit.active_support) (p < Q ? row.support_rho : row.support_beta) += 1;
      row.ic = row.sigma2 + ic_star_penalty(data.n, data.T) * (row.support_rho + row.support_beta);
      s.trace.push_back(row);
      return s;
    }
    const auto bars = compute_gamma_bar(ctx, pen_base, cfg.opt, pilot.theta_hat);
    rep.gamma_rho_bar = bars.first;
    rep.gamma_beta_bar = bars.second;
    const GammaGrid grid =
        log_gamma_grid(bars.first, bars.second, cfg.grid_points, cfg.grid_lo_frac);
    return select_gamma(grid, ctx, pen_base, cfg.opt, pilot.theta_hat);
  });
  rep.gamma_rho = sel.gamma_rho;
  rep.gamma_beta = sel.gamma_beta;
  rep.gamma_trace = sel.trace;
  ParamVector theta_check = sel.best_fit.theta_hat;

  // Stage 3: number of factors from the implied pure factor panel.
  int R_star = R_use;
  if (cfg.fix_R < 0) {
    run_stage(3, "factor count", [&] {
      const Matrix resid = residual_factor_panel(theta_check, ctx);
      const auto variants = standard_factor_ic_variants();
      rep.R_by_variant = select_num_factors(resid, R_max, variants);
      for (const auto& variant : variants) {
        for (int R = 0; R <= R_max; ++R) {
          rep.factor_trace.push_back({variant.name, R, ic_factors(resid, R, variant)});
        }
      }
      if (!rep.R_by_variant.count(cfg.factor_variant)) {
        throw SelectionFailureError("unknown factor IC variant '" + cfg.factor_variant + "'");
      }
      R_star = rep.R_by_variant.at(cfg.factor_variant);
      return 0;
    });
  }
  rep.R_selected = R_star;

  // Stage 4: re-estimate at the detected factor count.
  ObjectiveContext ctx_final = ctx;
  ParamVector theta_hat = theta_check;
  if (R_star != R_use) {
    run_stage(4, "re-estimation", [&] {
      ctx_final = ctx.with(R_star, std::nullopt);
      PenaltyConfig pen = pen_base;
      pen.gamma_rho = sel.gamma_rho;
      pen.gamma_beta = sel.gamma_beta;
      theta_hat = maximize_penalized(ctx_final, pen, cfg.opt, theta_check).theta_hat;
      return 0;
    });
  }

  // Stage 5: bias correction and standard errors on the selected support.
  const auto names = coefficient_names(data, Q);
  rep.coefficients.resize(P);
  const Vector est = theta_hat.stacked();
  for (int p = 0; p < P; ++p) {
    rep.coefficients[p].name = names[p];
    rep.coefficients[p].estimate = est[p];
    rep.coefficients[p].selected = est[p] != 0.0;
  }
  const SupportLayout lay = support_layout(theta_hat, data);
  if (lay.P0() == 0) {
    rep.warnings.push_back("selected support is empty; no inference performed");
    return rep;
  }
  run_stage(5, "inference", [&] {
    const InferenceInputs inputs = make_inference_inputs(theta_hat, ctx_final);
    rep.sigma2 = inputs.sigma2;
    rep.m3 = inputs.m3;
    rep.m4 = inputs.m4;
    const CorrectedEstimates corr = bias_correct(inputs);
    rep.d_condition = corr.d_condition;
    for (int i = 0; i < lay.P0(); ++i) {
      auto& c = rep.coefficients[lay.stacked[i]];
      c.corrected = corr.theta_c[i];
      c.se = corr.se[i];
      c.tstat = corr.tstats[i];
      c.bias = corr.bias[i];
    }
    return 0;
  });
  return rep;
}

}  // namespace spillover
