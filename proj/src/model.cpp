#include "spillover/model.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "spillover/errors.hpp"

namespace spillover {

Vector ParamVector::beta() const {
  Vector b(delta.size() + phi.size());
  b << delta, phi;
  return b;
}

Vector ParamVector::stacked() const {
  Vector v(P());
  v << rho, delta, phi;
  return v;
}

ParamVector ParamVector::from_stacked(const Vector& v, int Q, int Kstar) {
  if (v.size() < Q + Kstar) throw InvalidArgumentError("stacked parameter vector too short");
  ParamVector p;
  p.rho = v.head(Q);
  p.delta = v.segment(Q, Kstar);
  p.phi = v.tail(v.size() - Q - Kstar);
  return p;
}

ParamVector ParamVector::zeros(int Q, int Kstar, int nphi) {
  ParamVector p;
  p.rho = Vector::Zero(Q);
  p.delta = Vector::Zero(Kstar);
  p.phi = Vector::Zero(nphi);
  return p;
}

std::vector<bool> ParamVector::support_mask() const {
  const Vector v = stacked();
  std::vector<bool> mask(v.size());
  for (int p = 0; p < v.size(); ++p) mask[p] = v[p] != 0.0;
  return mask;
}

int ParamVector::support_size() const {
  int s = 0;
  for (bool b : support_mask()) s += b;
  return s;
}

void PanelData::validate() const {
  auto check = [&](const Matrix& m, const std::string& what) {
    if (m.rows() != n || m.cols() != T) {
      throw InvalidArgumentError(what + " is not n x T");
    }
    if (!m.allFinite()) throw InvalidArgumentError(what + " has non-finite entries");
  };
  if (n <= 0 || T <= 0) throw InvalidArgumentError("panel dimensions must be positive");
  check(Y, "Y");
  for (size_t k = 0; k < X_star.size(); ++k) check(X_star[k], "X_star[" + std::to_string(k) + "]");
  if (own_lag || !lag_channels.empty()) check(Y_lag, "Y_lag");
}

void assemble_derived(PanelData& data, const WeightsSet& weights) {
  data.validate();
  data.derived.clear();
  data.derived.reserve(data.K());
  for (const auto& x : data.X_star) data.derived.push_back(x);
  if (data.own_lag) data.derived.push_back(data.Y_lag);
  for (int q : data.lag_channels) {
    if (q < 0 || q >= weights.size()) {
      throw InvalidArgumentError("lag channel index out of range");
    }
    data.derived.push_back(weights[q] * data.Y_lag);
  }
}

std::vector<std::string> coefficient_names(const PanelData& data, int Q) {
  std::vector<std::string> names;
  for (int q = 0; q < Q; ++q) names.push_back("rho_" + std::to_string(q + 1));
  for (int k = 0; k < data.Kstar(); ++k) names.push_back("delta_" + std::to_string(k + 1));
  if (data.own_lag) names.push_back("phi_1");
  for (int q : data.lag_channels) names.push_back("phi_" + std::to_string(q + 2));
  return names;
}

Matrix Projector::P() const {
  const int d = dim();
  if (rank() == 0) return Matrix::Zero(d, d);
  return basis * basis.transpose();
}

Matrix Projector::M() const {
  const int d = dim();
  return Matrix::Identity(d, d) - P();
}

Matrix Projector::apply_M(const Matrix& X) const {
  if (rank() == 0) return X;
  return X - basis * (basis.transpose() * X);
}

Matrix Projector::apply_P(const Matrix& X) const {
  if (rank() == 0) return Matrix::Zero(X.rows(), X.cols());
  return basis * (basis.transpose() * X);
}

Projector projector_from(const Matrix& B) {
  Projector proj;
  if (B.size() == 0 || B.cwiseAbs().maxCoeff() == 0.0) {
    proj.basis = Matrix::Zero(B.rows(), 0);
    return proj;
  }
  Eigen::BDCSVD<Matrix> svd(B, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  const double tol = 1e-10 * sv(0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol) ++rank;
  }
  proj.basis = svd.matrixU().leftCols(rank);
  return proj;
}

Matrix spatial_filter(const Vector& rho, const WeightsSet& weights) {
  if (rho.size() != weights.size()) {
    throw InvalidArgumentError("rho length does not match channel count");
  }
  const int n = weights.n();
  Matrix S = Matrix::Identity(n, n);
  for (int q = 0; q < weights.size(); ++q) {
    if (rho[q] != 0.0) S.noalias() -= rho[q] * weights[q];
  }
  return S;
}

double log_det_spatial_filter(const Vector& rho, const WeightsSet& weights) {
  const Matrix S = spatial_filter(rho, weights);
  Eigen::PartialPivLU<Matrix> lu(S);
  const auto& U = lu.matrixLU();
  double log_abs = 0;
  double sign = lu.permutationP().determinant();  // +1 or -1
  for (int i = 0; i < U.rows(); ++i) {
    const double d = U(i, i);
    if (d == 0.0 || !std::isfinite(d)) {
      throw InadmissibleParameterError("spatial filter is numerically singular");
    }
    sign *= (d > 0 ? 1.0 : -1.0);
    log_abs += std::log(std::abs(d));
  }
  if (sign <= 0) {
    throw InadmissibleParameterError("spatial filter determinant is nonpositive");
  }
  if (log_abs < -300.0) {
    throw InadmissibleParameterError("spatial filter determinant underflows");
  }
  return log_abs;
}

double spectral_norm(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(A);
  return svd.singularValues()(0);
}

DynamicsMatrix dynamics_matrix(const Vector& rho, const Vector& phi, const PanelData& data,
                               const WeightsSet& weights) {
  if (phi.size() != data.n_phi()) {
    throw InvalidArgumentError("phi length does not match the panel's dynamic layout");
  }
  const int n = weights.n() > 0 ? weights.n() : data.n;
  Matrix B = Matrix::Zero(n, n);
  int idx = 0;
  if (data.own_lag) B += phi[idx++] * Matrix::Identity(n, n);
  for (int q : data.lag_channels) B += phi[idx++] * weights[q];

  DynamicsMatrix out;
  if (B.cwiseAbs().maxCoeff() == 0.0) {
    out.A = Matrix::Zero(n, n);
    return out;
  }
  const Matrix S = spatial_filter(rho, weights);
  Eigen::PartialPivLU<Matrix> lu(S);
  if (std::abs(lu.determinant()) < 1e-300) {
    throw InadmissibleParameterError("spatial filter singular in dynamics matrix");
  }
  out.A = lu.solve(B);
  out.spectral_norm = spectral_norm(out.A);
  return out;
}

Matrix impact_matrix(int q, const Vector& rho, const WeightsSet& weights) {
  if (q < 0 || q >= weights.size()) throw InvalidArgumentError("channel index out of range");
  const Matrix S = spatial_filter(rho, weights);
  Eigen::PartialPivLU<Matrix> lu(S);
  if (std::abs(lu.determinant()) < 1e-300) {
    throw InadmissibleParameterError("spatial filter singular in impact matrix");
  }
  const int n = weights.n();
  const Matrix S_inv = lu.solve(Matrix::Identity(n, n));
  return weights[q] * S_inv;
}

std::vector<Matrix> impact_matrices(const Vector& rho, const WeightsSet& weights) {
  const int n = weights.n();
  const Matrix S = spatial_filter(rho, weights);
  Eigen::PartialPivLU<Matrix> lu(S);
  if (std::abs(lu.determinant()) < 1e-300) {
    throw InadmissibleParameterError("spatial filter singular in impact matrices");
  }
  const Matrix S_inv = lu.solve(Matrix::Identity(n, n));
  std::vector<Matrix> G;
  G.reserve(weights.size());
  for (int q = 0; q < weights.size(); ++q) G.push_back(weights[q] * S_inv);
  return G;
}

Matrix residual_matrix(const ParamVector& theta, const PanelData& data, const WeightsSet& weights) {
  if (static_cast<int>(data.derived.size()) != data.K()) {
    throw InvalidArgumentError("panel derived covariates not assembled");
  }
  if (theta.Q() != weights.size() || theta.Kstar() != data.Kstar() ||
      theta.phi.size() != data.n_phi()) {
    throw InvalidArgumentError("parameter blocks do not match panel layout");
  }
  Matrix E = data.Y;
  for (int q = 0; q < theta.Q(); ++q) {
    if (theta.rho[q] != 0.0) E.noalias() -= theta.rho[q] * (weights[q] * data.Y);
  }
  const Vector b = theta.beta();
  for (int k = 0; k < data.K(); ++k) {
    if (b[k] != 0.0) E.noalias() -= b[k] * data.derived[k];
  }
  return E;
}

Instruments build_instruments(const ParamVector& theta_ref, const PanelData& data,
                              const WeightsSet& weights) {
  const int Q = weights.size();
  Instruments inst;
  inst.Z.reserve(data.P(Q));

  Matrix Xb = Matrix::Zero(data.n, data.T);
  const Vector b = theta_ref.beta();
  for (int k = 0; k < data.K(); ++k) {
    if (b[k] != 0.0) Xb.noalias() += b[k] * data.derived[k];
  }
  const auto G = impact_matrices(theta_ref.rho, weights);
  for (int q = 0; q < Q; ++q) inst.Z.push_back(G[q] * Xb);
  for (int k = 0; k < data.K(); ++k) inst.Z.push_back(data.derived[k]);
  return inst;
}

}  // namespace spillover
