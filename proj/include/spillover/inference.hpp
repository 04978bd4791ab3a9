#pragma once

#include <vector>

#include "spillover/objective.hpp"

namespace spillover {

/// Everything the bias and covariance plug-ins need, at the selected support.
struct InferenceInputs {
  ParamVector theta_hat;  // full layout, exact zeros off the support
  Matrix Lambda_basis;    // n x R*, orthonormal
  Matrix F_hat;           // T x R*
  double sigma2 = 0.0;
  double m3 = 0.0;  // third raw moment of the idiosyncratic errors
  double m4 = 0.0;  // fourth raw moment
  PanelData data;
  WeightsSet weights;
};

/// Positions of the selected coefficients within the stacked layout, split
/// by block. Channel lists index into the weights set.
struct SupportLayout {
  std::vector<int> stacked;       // all selected stacked indices, ascending
  std::vector<int> rho_channels;  // selected endogenous channels
  std::vector<int> exo_positions; // selected delta positions
  bool own_lag = false;           // own-lag coefficient selected
  std::vector<int> lag_positions; // selected positions within data.lag_channels

  int P0() const { return static_cast<int>(stacked.size()); }
  int Q0() const { return static_cast<int>(rho_channels.size()); }
};

SupportLayout support_layout(const ParamVector& theta, const PanelData& data);

/// Factor estimate and residual moments at theta, packaged for inference.
InferenceInputs make_inference_inputs(const ParamVector& theta, const ObjectiveContext& ctx);

/// Trace-centred impact matrix G*_q = G_q - (tr G_q / n) I.
Matrix centered_impact_matrix(int q, const Vector& rho, const WeightsSet& weights);

/// Conditional-expectation instruments: each selected instrument rebuilt on
/// the error-free panel implied by theta_hat, the estimated common component
/// Lambda F' and the observed exogenous covariates. Instruments that are
/// functions of exogenous data alone come back unchanged.
std::vector<Matrix> zbar_instruments(const InferenceInputs& inputs);

/// Plain instruments restricted to the support, at theta_hat.
std::vector<Matrix> support_instruments(const InferenceInputs& inputs);

/// D = (1/(sigma2 nT)) Zhat' (M_F (x) M_Lambda) Zhat + blockdiag(Omega, 0),
/// evaluated matrix-wise as Gram entries tr(Z_p' M_L Z_p' M_F) without ever
/// materialising the nT x nT Kronecker product.
Matrix compute_D(const InferenceInputs& inputs);

/// V = [ (m3/sigma4)(Phi + Phi') + ((m4 - 3 sigma4)/sigma4) blockdiag(Xi, 0) ] / (nT),
/// the non-Gaussian part of the score variance, commensurate with D.
Matrix compute_V(const InferenceInputs& inputs);

struct BiasComponents {
  Vector b1;         // per selected rho channel
  Vector b2;         // per selected rho channel
  Vector b3;         // per selected dynamic coefficient (own lag first if selected)
  Vector assembled;  // P0 vector: (b1 + b2 on rho; 0 on exogenous; b3 on dynamics)
};

/// Incidental-parameter bias terms. The h-sums over lagged alignments use the
/// h-lag diagonal sums of P_F and truncate once every trace factor falls
/// below 1e-14 in magnitude; geometric decay is guaranteed by ||A||_2 < 1.
BiasComponents compute_bias(const InferenceInputs& inputs);

struct CorrectedEstimates {
  Vector theta_c;  // bias-corrected support coefficients
  Vector se;
  Vector tstats;
  Vector bias;          // assembled bias vector (diagnostic)
  double d_condition = 0.0;
};

/// theta_c = theta_hat - D^{-1} b / sqrt(nT); se from the sandwich
/// D^{-1} (D + V) D^{-1} / (nT). Throws SingularInformationError when the
/// condition number of D exceeds 1e12.
CorrectedEstimates bias_correct(const InferenceInputs& inputs);

struct ResidualMoments {
  double sigma2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
};

/// Raw moments of the defactored residuals M_Lambda E M_F; sigma2 is
/// rescaled by nT / ((n - R)(T - R)) for the projected degrees of freedom.
ResidualMoments estimate_moments(const Matrix& residuals, const Matrix& Lambda_basis,
                                 const Matrix& F_hat);

}  // namespace spillover
