#ifndef SVIGLMM_GLM_HPP
#define SVIGLMM_GLM_HPP

#include "sviglmm/data.hpp"

namespace sviglmm {

/// Priors: beta ~ N(0, Sigma_beta), D ~ IW(nu, S).
struct PriorSpec {
  Matrix Sigma_beta;  // p x p, default 1000 I
  double nu = 0.0;    // default r
  Matrix S;           // r x r, default r * R_hat
  double c = 1.0;     // inflation factor in the prior guess for D

  void validate(Index p, Index r) const;
};

struct GlmFit {
  Vector beta;     // p
  Matrix cov;      // p x p, inverse Fisher information at beta
  int iterations = 0;
};

/// Pooled GLM (random effects set to zero) by iteratively reweighted least
/// squares; converges when the relative coefficient change drops below 1e-8.
GlmFit fit_pooled_glm(const Dataset& data, Family family);

/// Diagonal GLM weights [v(mu) g'(mu)^2]^{-1} at u_i = 0: mu for Poisson
/// (offset included), mu(1-mu) for Bernoulli.
Vector glm_weight_matrix(const ClusterData& cluster, Family family, const Vector& beta_hat);

/// Default prior guess for D from first-stage variability:
/// R_hat = c * ( (1/n) sum_i Z_i^T M_i Z_i )^{-1}.
Matrix kass_prior_guess(const Dataset& data, Family family, const Vector& beta_hat, double c);

/// Priors filled with the defaults: Sigma_beta = sigma_beta_scale * I,
/// nu = r, S = r * R_hat.
PriorSpec default_priors(const Dataset& data, const Matrix& R_hat, double sigma_beta_scale = 1000.0);

}  // namespace sviglmm

#endif
