#include "spillover/inference.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "spillover/dgp.hpp"
#include "spillover/errors.hpp"

namespace spillover {

namespace {

constexpr double kHSumTol = 1e-14;
constexpr double kConditionCap = 1e12;

Matrix projector_dense(const Matrix& basis, int dim) {
  if (basis.cols() == 0) return Matrix::Zero(dim, dim);
  return basis * basis.transpose();
}

/// h-lag diagonal sum of the T x T factor projector: sum_t (P_F)_{t, t+h}.
double lag_diagonal_sum(const Matrix& PF, int h) {
  const int T = static_cast<int>(PF.rows());
  double s = 0;
  for (int t = 0; t + h < T; ++t) s += PF(t, t + h);
  return s;
}

}  // namespace

SupportLayout support_layout(const ParamVector& theta, const PanelData& data) {
  SupportLayout lay;
  const int Q = theta.Q();
  const int Kstar = theta.Kstar();
  for (int q = 0; q < Q; ++q) {
    if (theta.rho[q] != 0.0) {
      lay.stacked.push_back(q);
      lay.rho_channels.push_back(q);
    }
  }
  for (int k = 0; k < Kstar; ++k) {
    if (theta.delta[k] != 0.0) {
      lay.stacked.push_back(Q + k);
      lay.exo_positions.push_back(k);
    }
  }
  int pos = 0;
  if (data.own_lag) {
    if (theta.phi[pos] != 0.0) {
      lay.stacked.push_back(Q + Kstar + pos);
      lay.own_lag = true;
    }
    ++pos;
  }
  for (size_t j = 0; j < data.lag_channels.size(); ++j, ++pos) {
    if (theta.phi[pos] != 0.0) {
      lay.stacked.push_back(Q + Kstar + pos);
      lay.lag_positions.push_back(static_cast<int>(j));
    }
  }
  return lay;
}

InferenceInputs make_inference_inputs(const ParamVector& theta, const ObjectiveContext& ctx) {
  InferenceInputs in;
  in.theta_hat = theta;
  const FactorEstimate fe = recover_factor_estimate(theta, ctx);
  in.Lambda_basis = fe.Lambda_basis;
  in.F_hat = fe.F_hat;
  const Matrix E = residual_matrix(theta, ctx.data, ctx.weights);
  const ResidualMoments m = estimate_moments(E, fe.Lambda_basis, fe.F_hat);
  in.sigma2 = m.sigma2;
  in.m3 = m.m3;
  in.m4 = m.m4;
  in.data = ctx.data;
  in.weights = ctx.weights;
  return in;
}

Matrix centered_impact_matrix(int q, const Vector& rho, const WeightsSet& weights) {
  Matrix G = impact_matrix(q, rho, weights);
  const double c = G.trace() / G.rows();
  G.diagonal().array() -= c;
  return G;
}

std::vector<Matrix> support_instruments(const InferenceInputs& inputs) {
  const SupportLayout lay = support_layout(inputs.theta_hat, inputs.data);
  const Instruments all = build_instruments(inputs.theta_hat, inputs.data, inputs.weights);
  std::vector<Matrix> Z;
  Z.reserve(lay.P0());
  for (int p : lay.stacked) Z.push_back(all.Z[p]);
  return Z;
}

std::vector<Matrix> zbar_instruments(const InferenceInputs& inputs) {
  const SupportLayout lay = support_layout(inputs.theta_hat, inputs.data);
  const Matrix common = inputs.Lambda_basis.cols() > 0
                            ? Matrix(inputs.Lambda_basis * inputs.F_hat.transpose())
                            : Matrix::Zero(inputs.data.n, inputs.data.T);
  const PanelData expected =
      simulate_expected_path(inputs.theta_hat, inputs.data, common, inputs.weights);
  const Instruments all = build_instruments(inputs.theta_hat, expected, inputs.weights);
  std::vector<Matrix> Zbar;
  Zbar.reserve(lay.P0());
  for (int p : lay.stacked) Zbar.push_back(all.Z[p]);
  return Zbar;
}

Matrix compute_D(const InferenceInputs& inputs) {
  if (!(inputs.sigma2 > 0)) throw NumericDegenerateError("sigma2 must be positive in D");
  const int n = inputs.data.n;
  const int T = inputs.data.T;
  const double nT = static_cast<double>(n) * T;
  const SupportLayout lay = support_layout(inputs.theta_hat, inputs.data);
  const int P0 = lay.P0();

  const std::vector<Matrix> Z = support_instruments(inputs);
  const Projector PF = projector_from(inputs.F_hat);

  // Ztilde_p = M_Lambda Z_p M_F; the Kronecker-projected Gram is then the
  // plain Gram of the Ztilde matrices since both projectors are idempotent.
  std::vector<Matrix> Zt(P0);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < P0; ++p) {
    Matrix m = Z[p];
    if (inputs.Lambda_basis.cols() > 0) {
      m.noalias() -= inputs.Lambda_basis * (inputs.Lambda_basis.transpose() * Z[p]);
    }
    Zt[p] = PF.rank() > 0 ? Matrix(m - (m * PF.basis) * PF.basis.transpose()) : m;
  }

  Matrix D = Matrix::Zero(P0, P0);
  for (int p = 0; p < P0; ++p) {
    for (int r = p; r < P0; ++r) {
      D(p, r) = D(r, p) = Zt[p].cwiseProduct(Zt[r]).sum() / (inputs.sigma2 * nT);
    }
  }

  // Omega block on the selected endogenous channels.
  const int Q0 = lay.Q0();
  if (Q0 > 0) {
    std::vector<Matrix> G(Q0);
    for (int a = 0; a < Q0; ++a) {
      G[a] = impact_matrix(lay.rho_channels[a], inputs.theta_hat.rho, inputs.weights);
    }
    for (int a = 0; a < Q0; ++a) {
      for (int b = 0; b < Q0; ++b) {
        const double cross = (G[a].cwiseProduct(G[b].transpose()).sum() +
                              G[a].cwiseProduct(G[b]).sum()) / n;
        D(a, b) += cross - 2.0 / (static_cast<double>(n) * n) * G[a].trace() * G[b].trace();
      }
    }
  }
  return D;
}

Matrix compute_V(const InferenceInputs& inputs) {
  if (!(inputs.sigma2 > 0)) throw NumericDegenerateError("sigma2 must be positive in V");
  const int n = inputs.data.n;
  const int T = inputs.data.T;
  const double nT = static_cast<double>(n) * T;
  const double s4 = inputs.sigma2 * inputs.sigma2;
  const SupportLayout lay = support_layout(inputs.theta_hat, inputs.data);
  const int P0 = lay.P0();
  const int Q0 = lay.Q0();

  Matrix V = Matrix::Zero(P0, P0);
  if (Q0 == 0) return V;

  std::vector<Vector> gdiag(Q0);
  for (int a = 0; a < Q0; ++a) {
    gdiag[a] =
        centered_impact_matrix(lay.rho_channels[a], inputs.theta_hat.rho, inputs.weights).diagonal();
  }

  const std::vector<Matrix> Z = support_instruments(inputs);
  const std::vector<Matrix> Zbar = zbar_instruments(inputs);
  const Projector PF = projector_from(inputs.F_hat);

  // zz_p = M_Lambda Zbar_p M_F + (Z_p - Zbar_p).
  std::vector<Matrix> zz(P0);
  for (int p = 0; p < P0; ++p) {
    Matrix m = Zbar[p];
    if (inputs.Lambda_basis.cols() > 0) {
      m.noalias() -= inputs.Lambda_basis * (inputs.Lambda_basis.transpose() * Zbar[p]);
    }
    if (PF.rank() > 0) m -= (m * PF.basis) * PF.basis.transpose();
    zz[p] = m + (Z[p] - Zbar[p]);
  }

  // Phi has the cross moments in its first Q0 rows; Xi sits on the rho block.
  Matrix Phi = Matrix::Zero(P0, P0);
  const Vector ones = Vector::Ones(T);
  for (int a = 0; a < Q0; ++a) {
    for (int p = 0; p < P0; ++p) {
      Phi(a, p) = gdiag[a].dot(zz[p] * ones);
    }
  }
  Matrix Xi = Matrix::Zero(Q0, Q0);
  for (int a = 0; a < Q0; ++a) {
    for (int b = a; b < Q0; ++b) {
      Xi(a, b) = Xi(b, a) = T * gdiag[a].dot(gdiag[b]);
    }
  }

  V = (inputs.m3 / s4) * (Phi + Phi.transpose());
  V.topLeftCorner(Q0, Q0) += ((inputs.m4 - 3 * s4) / s4) * Xi;
  V /= nT;
  return V;
}

BiasComponents compute_bias(const InferenceInputs& inputs) {
  const int n = inputs.data.n;
  const int T = inputs.data.T;
  const double sqrt_nT = std::sqrt(static_cast<double>(n) * T);
  const SupportLayout lay = support_layout(inputs.theta_hat, inputs.data);
  const int Q0 = lay.Q0();
  const int R = static_cast<int>(inputs.Lambda_basis.cols());

  const Matrix PL = projector_dense(inputs.Lambda_basis, n);
  const Projector PFproj = projector_from(inputs.F_hat);
  const Matrix PF = projector_dense(PFproj.basis, T);

  BiasComponents bc;
  bc.b1 = Vector::Zero(Q0);
  bc.b2 = Vector::Zero(Q0);

  std::vector<Matrix> G(Q0);
  for (int a = 0; a < Q0; ++a) {
    G[a] = impact_matrix(lay.rho_channels[a], inputs.theta_hat.rho, inputs.weights);
    bc.b1[a] = std::sqrt(static_cast<double>(T) / n) *
               (R * G[a].trace() / n - PL.cwiseProduct(G[a].transpose()).sum());
  }

  const bool dynamic = inputs.data.own_lag || !inputs.data.lag_channels.empty();
  const int n_dyn = (lay.own_lag ? 1 : 0) + static_cast<int>(lay.lag_positions.size());
  bc.b3 = Vector::Zero(n_dyn);

  if (dynamic) {
    const auto dyn = dynamics_matrix(inputs.theta_hat.rho, inputs.theta_hat.phi, inputs.data,
                                     inputs.weights);
    if (dyn.spectral_norm >= 1.0) {
      throw InadmissibleParameterError("estimated dynamics are non-stationary: ||A||_2 = " +
                                       std::to_string(dyn.spectral_norm));
    }
    const bool moving = dyn.A.cwiseAbs().maxCoeff() > 0;
    if (moving) {
      const Matrix S = spatial_filter(inputs.theta_hat.rho, inputs.weights);
      Matrix M = Eigen::PartialPivLU<Matrix>(S).solve(Matrix::Identity(n, n));  // A^{h-1} S^{-1}

      for (int h = 1; h <= T - 1; ++h) {
        const double lag_sum = lag_diagonal_sum(PF, h);
        // Trace factors at this h; M currently holds A^{h-1} S^{-1}.
        const double tr_own = M.trace();
        double max_tr = std::abs(tr_own);
        std::vector<double> tr_wlag(lay.lag_positions.size());
        for (size_t j = 0; j < lay.lag_positions.size(); ++j) {
          const int q = inputs.data.lag_channels[lay.lag_positions[j]];
          tr_wlag[j] = inputs.weights[q].cwiseProduct(M.transpose()).sum();
          max_tr = std::max(max_tr, std::abs(tr_wlag[j]));
        }
        const Matrix AM = dyn.A * M;  // A^h S^{-1}
        std::vector<double> tr_rho(Q0);
        for (int a = 0; a < Q0; ++a) {
          const int q = lay.rho_channels[a];
          tr_rho[a] = inputs.weights[q].cwiseProduct(AM.transpose()).sum();
          max_tr = std::max(max_tr, std::abs(tr_rho[a]));
        }
        if (max_tr < kHSumTol) break;

        for (int a = 0; a < Q0; ++a) bc.b2[a] -= lag_sum * tr_rho[a] / sqrt_nT;
        int d = 0;
        if (lay.own_lag) bc.b3[d++] -= lag_sum * tr_own / sqrt_nT;
        for (size_t j = 0; j < lay.lag_positions.size(); ++j) {
          bc.b3[d++] -= lag_sum * tr_wlag[j] / sqrt_nT;
        }
        M = AM;
      }
    }
  }

  bc.assembled = Vector::Zero(lay.P0());
  for (int a = 0; a < Q0; ++a) bc.assembled[a] = bc.b1[a] + bc.b2[a];
  const int dyn_offset = Q0 + static_cast<int>(lay.exo_positions.size());
  for (int d = 0; d < n_dyn; ++d) bc.assembled[dyn_offset + d] = bc.b3[d];
  return bc;
}

CorrectedEstimates bias_correct(const InferenceInputs& inputs) {
  const SupportLayout lay = support_layout(inputs.theta_hat, inputs.data);
  const int P0 = lay.P0();
  const double nT = static_cast<double>(inputs.data.n) * inputs.data.T;

  const Matrix D = compute_D(inputs);
  const Matrix V = compute_V(inputs);
  const BiasComponents bias = compute_bias(inputs);

  Eigen::SelfAdjointEigenSolver<Matrix> es(D);
  const double mu_min = es.eigenvalues().minCoeff();
  const double mu_max = es.eigenvalues().maxCoeff();
  CorrectedEstimates out;
  out.d_condition = mu_min > 0 ? mu_max / mu_min : std::numeric_limits<double>::infinity();
  if (!(mu_min > 0) || out.d_condition > kConditionCap) {
    throw SingularInformationError("information matrix D is singular or near-singular (cond = " +
                                   std::to_string(out.d_condition) + ")");
  }

  const Vector theta_full = inputs.theta_hat.stacked();
  Vector theta_supp(P0);
  for (int p = 0; p < P0; ++p) theta_supp[p] = theta_full[lay.stacked[p]];

  const Matrix D_inv = es.eigenvectors() *
                       es.eigenvalues().cwiseInverse().asDiagonal() *
                       es.eigenvectors().transpose();
  out.bias = bias.assembled;
  out.theta_c = theta_supp - D_inv * bias.assembled / std::sqrt(nT);
  const Matrix Cov = D_inv * (D + V) * D_inv / nT;
  out.se = Cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.tstats = Vector::Zero(P0);
  for (int p = 0; p < P0; ++p) {
    out.tstats[p] = out.se[p] > 0 ? out.theta_c[p] / out.se[p] : 0.0;
  }
  return out;
}

ResidualMoments estimate_moments(const Matrix& residuals, const Matrix& Lambda_basis,
                                 const Matrix& F_hat) {
  const int n = static_cast<int>(residuals.rows());
  const int T = static_cast<int>(residuals.cols());
  const double nT = static_cast<double>(n) * T;
  const int R = static_cast<int>(Lambda_basis.cols());

  Matrix U = residuals;
  if (R > 0) U.noalias() -= Lambda_basis * (Lambda_basis.transpose() * residuals);
  const Projector PF = projector_from(F_hat);
  if (PF.rank() > 0) U -= (U * PF.basis) * PF.basis.transpose();

  ResidualMoments m;
  const double denom = static_cast<double>(n - R) * (T - PF.rank());
  m.sigma2 = denom > 0 ? U.squaredNorm() / denom : 0.0;
  m.m3 = U.array().cube().sum() / nT;
  m.m4 = U.array().pow(4).sum() / nT;
  return m;
}

}  // namespace spillover
