#include "spillover/dgp.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "spillover/errors.hpp"

namespace spillover {

namespace {

// Fixed split keys so the draw order is documented and stable.
constexpr std::uint64_t kKeyLoadings = 1;
constexpr std::uint64_t kKeyFactors = 2;
constexpr std::uint64_t kKeyErrors = 3;
constexpr std::uint64_t kKeyCovariateBase = 100;

Matrix draw_normal(SplitMix64& rng, int rows, int cols, double scale) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.next_normal();
  }
  return m;
}

}  // namespace

void SimulationDesign::validate() const {
  if (n <= 0 || T <= 0) throw InvalidArgumentError("design dimensions must be positive");
  if (R0 < 0) throw InvalidArgumentError("R0 must be nonnegative");
  if (burn_in < 0) throw InvalidArgumentError("burn_in must be nonnegative");
  if (sigma0_sq < 0) throw InvalidArgumentError("sigma0_sq must be nonnegative");
  if (n_primitives < 1) throw InvalidArgumentError("at least one primitive covariate is required");
  if (theta0.Q() != weights.size()) throw InvalidArgumentError("theta0.rho does not match channels");
  if (theta0.Kstar() != Kstar()) throw InvalidArgumentError("theta0.delta does not match covariates");
  const int nphi = (own_lag ? 1 : 0) + static_cast<int>(lag_channels.size());
  if (theta0.phi.size() != nphi) throw InvalidArgumentError("theta0.phi does not match lag layout");
}

SimulationDesign table1_design(int n, int T) {
  auto q_of = [](int n_) { return n_ == 25 ? 3 : n_ == 50 ? 4 : n_ == 100 ? 5 : 0; };
  auto kp_of = [](int T_) { return T_ == 25 ? 3 : T_ == 50 ? 4 : T_ == 100 ? 5 : 0; };
  const int Q = q_of(n);
  const int Kp = kp_of(T);
  if (Q == 0 || Kp == 0) {
    throw InvalidArgumentError("design supports n, T in {25, 50, 100}; got n=" +
                               std::to_string(n) + " T=" + std::to_string(T));
  }

  SimulationDesign d;
  d.n = n;
  d.T = T;
  d.R0 = 3;
  d.sigma0_sq = 1.0;
  d.burn_in = 200;
  d.n_primitives = Kp;
  for (int q = 1; q <= Q; ++q) d.weights.matrices.push_back(build_path_neighbors(n, q));
  for (int q = 0; q < Q; ++q) d.interact_channels.push_back(q);
  d.own_lag = true;
  for (int q = 0; q + 1 < Q; ++q) d.lag_channels.push_back(q);

  const double rho_pat[5] = {0.2, 0.2, 0.0, 0.2, 0.0};
  const double delta_pat[5] = {3.0, 0.0, -3.0, 0.0, 3.0};
  const double inter_pat[5] = {1.0, 0.0, -1.0, 0.0, 1.0};
  const double phi_pat[5] = {0.15, 0.0, -0.15, 0.0, 0.0};

  d.theta0.rho = Vector::Zero(Q);
  for (int q = 0; q < Q; ++q) d.theta0.rho[q] = rho_pat[q];
  d.theta0.delta = Vector::Zero(Kp + Q);
  for (int k = 0; k < Kp; ++k) d.theta0.delta[k] = delta_pat[k];
  for (int q = 0; q < Q; ++q) d.theta0.delta[Kp + q] = inter_pat[q];
  d.theta0.phi = Vector::Zero(Q);  // own lag + (Q-1) lagged channels
  for (int j = 0; j < Q; ++j) d.theta0.phi[j] = phi_pat[j];

  d.validate();
  return d;
}

SimulatedTruth simulate(const SimulationDesign& design) {
  design.validate();
  WeightsSet weights = design.weights;
  if (weights.size() == 0) weights.empty_n = design.n;
  const int n = design.n;
  const int T = design.T;
  const int total = design.burn_in + T;
  const int R0 = design.R0;

  // Layout skeleton used for the stationarity check and derived covariates.
  PanelData skel;
  skel.n = n;
  skel.T = T;
  skel.own_lag = design.own_lag;
  skel.lag_channels = design.lag_channels;

  const auto dyn = dynamics_matrix(design.theta0.rho, design.theta0.phi, skel, weights);
  if (dyn.spectral_norm >= 1.0) {
    throw InvalidArgumentError("design is non-stationary: ||A||_2 = " +
                               std::to_string(dyn.spectral_norm));
  }

  SplitMix64 root(design.seed);
  SplitMix64 rng_lambda = root.split(kKeyLoadings);
  SplitMix64 rng_f = root.split(kKeyFactors);
  SplitMix64 rng_eps = root.split(kKeyErrors);

  const Matrix Lambda0 = draw_normal(rng_lambda, n, R0, 1.0);
  const Matrix F_all = draw_normal(rng_f, total, R0, 1.0);
  const Matrix eps_all = draw_normal(rng_eps, n, total, std::sqrt(design.sigma0_sq));

  // Primitive covariates over all periods, each from its own stream.
  std::vector<Matrix> x_all(design.n_primitives);
  for (int k = 0; k < design.n_primitives; ++k) {
    SplitMix64 rng_x = root.split(kKeyCovariateBase + static_cast<std::uint64_t>(k));
    const double nu = rng_x.next_int(design.covariate_spec.nu_lo, design.covariate_spec.nu_hi);
    Matrix x = draw_normal(rng_x, n, total, std::sqrt(design.covariate_spec.noise_var));
    x.array() += nu;
    if (R0 > 0) x.noalias() += Lambda0 * F_all.transpose();
    x_all[k] = std::move(x);
  }
  std::vector<Matrix> inter_all;
  inter_all.reserve(design.interact_channels.size());
  for (int q : design.interact_channels) inter_all.push_back(weights[q] * x_all[0]);

  // Per-period exogenous contribution sum_k delta_k x_kt (primitives and
  // interactions), plus the common component and errors, filtered through S.
  const Matrix S = spatial_filter(design.theta0.rho, weights);
  Eigen::PartialPivLU<Matrix> lu(S);

  Matrix rhs_all = Matrix::Zero(n, total);
  for (int k = 0; k < design.n_primitives; ++k) {
    const double c = design.theta0.delta[k];
    if (c != 0.0) rhs_all.noalias() += c * x_all[k];
  }
  for (size_t j = 0; j < design.interact_channels.size(); ++j) {
    const double c = design.theta0.delta[design.n_primitives + static_cast<int>(j)];
    if (c != 0.0) rhs_all.noalias() += c * inter_all[j];
  }
  if (R0 > 0) rhs_all.noalias() += Lambda0 * F_all.transpose();
  rhs_all += eps_all;

  // Lag polynomial phi_1 I + sum_q phi_{q+1} W_q applied to y_{t-1}.
  Matrix lag_op = Matrix::Zero(n, n);
  {
    int idx = 0;
    if (design.own_lag) lag_op += design.theta0.phi[idx++] * Matrix::Identity(n, n);
    for (int q : design.lag_channels) lag_op += design.theta0.phi[idx++] * weights[q];
  }
  const bool dynamic = design.own_lag || !design.lag_channels.empty();

  Matrix Y(n, T);
  Matrix Y_lag(n, T);
  Vector y_prev = Vector::Zero(n);
  for (int s = 0; s < total; ++s) {
    Vector rhs = rhs_all.col(s);
    if (dynamic) rhs.noalias() += lag_op * y_prev;
    const Vector y = lu.solve(rhs);
    if (s >= design.burn_in) {
      const int t = s - design.burn_in;
      Y.col(t) = y;
      Y_lag.col(t) = y_prev;
    }
    y_prev = y;
  }

  SimulatedTruth truth;
  truth.Lambda0 = Lambda0;
  truth.F0 = F_all.bottomRows(T);
  truth.epsilon = eps_all.rightCols(T);

  PanelData& panel = truth.panel;
  panel.n = n;
  panel.T = T;
  panel.Y = Y;
  panel.own_lag = design.own_lag;
  panel.lag_channels = design.lag_channels;
  if (dynamic) panel.Y_lag = Y_lag;
  panel.X_star.reserve(design.Kstar());
  for (int k = 0; k < design.n_primitives; ++k) panel.X_star.push_back(x_all[k].rightCols(T));
  for (auto& m : inter_all) panel.X_star.push_back(m.rightCols(T));
  assemble_derived(panel, weights);
  return truth;
}

PanelData simulate_expected_path(const ParamVector& theta, const PanelData& base,
                                 const Matrix& factor_product, const WeightsSet& weights_in) {
  WeightsSet weights = weights_in;
  if (weights.size() == 0) weights.empty_n = base.n;
  if (factor_product.rows() != base.n || factor_product.cols() != base.T) {
    throw InvalidArgumentError("factor product is not n x T");
  }
  if (theta.Kstar() != base.Kstar() || theta.phi.size() != base.n_phi()) {
    throw InvalidArgumentError("theta does not match panel layout");
  }
  const int n = base.n;
  const int T = base.T;

  Matrix rhs_all = factor_product;
  for (int k = 0; k < base.Kstar(); ++k) {
    if (theta.delta[k] != 0.0) rhs_all.noalias() += theta.delta[k] * base.X_star[k];
  }

  const Matrix S = spatial_filter(theta.rho, weights);
  Eigen::PartialPivLU<Matrix> lu(S);
  if (std::abs(lu.determinant()) < 1e-300) {
    throw InadmissibleParameterError("spatial filter singular in expected path");
  }

  PanelData out;
  out.n = n;
  out.T = T;
  out.own_lag = base.own_lag;
  out.lag_channels = base.lag_channels;
  out.X_star = base.X_star;

  const bool dynamic = base.own_lag || !base.lag_channels.empty();
  if (!dynamic) {
    out.Y = lu.solve(rhs_all);
    assemble_derived(out, weights);
    return out;
  }

  Matrix lag_op = Matrix::Zero(n, n);
  {
    int idx = 0;
    if (base.own_lag) lag_op += theta.phi[idx++] * Matrix::Identity(n, n);
    for (int q : base.lag_channels) lag_op += theta.phi[idx++] * weights[q];
  }

  out.Y.resize(n, T);
  out.Y_lag.resize(n, T);
  Vector y_prev = base.Y_lag.col(0);  // observed pre-sample outcome
  for (int t = 0; t < T; ++t) {
    out.Y_lag.col(t) = y_prev;
    const Vector y = lu.solve(Vector(rhs_all.col(t) + lag_op * y_prev));
    out.Y.col(t) = y;
    y_prev = y;
  }
  assemble_derived(out, weights);
  return out;
}

}  // namespace spillover
