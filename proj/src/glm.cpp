#include "sviglmm/glm.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "sviglmm/mathutil.hpp"

namespace sviglmm {

void PriorSpec::validate(Index p, Index r) const {
  if (Sigma_beta.rows() != p || Sigma_beta.cols() != p)
    throw ConfigError("Sigma_beta dimension mismatch");
  if (S.rows() != r || S.cols() != r) throw ConfigError("prior scale S dimension mismatch");
  if (nu < static_cast<double>(r)) throw ConfigError("inverse-Wishart df must be >= r");
  Eigen::LLT<Matrix> a(Sigma_beta);
  if (a.info() != Eigen::Success) throw ConfigError("Sigma_beta is not positive definite");
  Eigen::LLT<Matrix> b(S);
  if (b.info() != Eigen::Success) throw ConfigError("prior scale S is not positive definite");
}

namespace {

double mean_from_linpred(Family family, double eta, double offset) {
  const double e = clamp_linpred(eta);
  return family == Family::Poisson ? offset * std::exp(e) : sigmoid(e);
}

}  // namespace

GlmFit fit_pooled_glm(const Dataset& data, Family family) {
  const Index p = data.p();
  const Index N = data.total_obs();
  Matrix X(N, p);
  Vector y(N), off(N);
  Index row = 0;
  for (const auto& c : data.clusters) {
    X.middleRows(row, c.n_obs()) = c.X;
    y.segment(row, c.n_obs()) = c.y;
    if (family == Family::Poisson)
      off.segment(row, c.n_obs()) = c.E.size() ? c.E : Vector::Ones(c.n_obs());
    else
      off.segment(row, c.n_obs()).setOnes();
    row += c.n_obs();
  }

  GlmFit fit;
  fit.beta = Vector::Zero(p);
  Matrix info(p, p);
  constexpr int max_iter = 50;
  for (int it = 0; it < max_iter; ++it) {
    Vector eta = X * fit.beta;
    Vector w(N), z(N);
    for (Index i = 0; i < N; ++i) {
      const double mu = mean_from_linpred(family, eta[i], off[i]);
      w[i] = family == Family::Poisson ? mu : mu * (1.0 - mu);
      if (w[i] < 1e-12) w[i] = 1e-12;
      z[i] = eta[i] + (y[i] - mu) / w[i];
    }
    info = X.transpose() * w.asDiagonal() * X;
    Eigen::LLT<Matrix> llt(info);
    if (llt.info() != Eigen::Success)
      throw NumericalError("pooled GLM: design is rank deficient");
    Vector beta_new = llt.solve(X.transpose() * (w.asDiagonal() * z));
    if (!beta_new.allFinite() || beta_new.norm() > 1e8)
      throw NumericalError("pooled GLM: IRLS diverged");
    const double rel = (beta_new - fit.beta).norm() / std::max(1e-12, beta_new.norm());
    fit.beta = beta_new;
    fit.iterations = it + 1;
    if (rel < 1e-8) break;
    if (it == max_iter - 1) throw NumericalError("pooled GLM: IRLS did not converge");
  }

  // Final information at the converged coefficients.
  Vector eta = X * fit.beta;
  Vector w(N);
  for (Index i = 0; i < N; ++i) {
    const double mu = mean_from_linpred(family, eta[i], off[i]);
    w[i] = family == Family::Poisson ? mu : mu * (1.0 - mu);
  }
  info = X.transpose() * w.asDiagonal() * X;
  fit.cov = spd_inverse(info, "pooled GLM information");
  return fit;
}

Vector glm_weight_matrix(const ClusterData& cluster, Family family, const Vector& beta_hat) {
  const Index n = cluster.n_obs();
  Vector w(n);
  const Vector eta = cluster.X * beta_hat;
  for (Index j = 0; j < n; ++j) {
    const double off = (family == Family::Poisson && cluster.E.size()) ? cluster.E[j] : 1.0;
    const double mu = mean_from_linpred(family, eta[j], off);
    w[j] = family == Family::Poisson ? mu : mu * (1.0 - mu);
  }
  return w;
}

Matrix kass_prior_guess(const Dataset& data, Family family, const Vector& beta_hat, double c) {
  const Index r = data.r();
  Matrix acc = Matrix::Zero(r, r);
  for (const auto& cl : data.clusters) {
    const Vector w = glm_weight_matrix(cl, family, beta_hat);
    acc.noalias() += cl.Z.transpose() * w.asDiagonal() * cl.Z;
  }
  acc /= static_cast<double>(data.n_clusters());
  Eigen::LLT<Matrix> llt(acc);
  if (llt.info() != Eigen::Success)
    throw NumericalError("prior guess: averaged Z^T M Z is singular; check Z rank");
  return symmetrize(c * llt.solve(Matrix::Identity(r, r)));
}

PriorSpec default_priors(const Dataset& data, const Matrix& R_hat, double sigma_beta_scale) {
  PriorSpec prior;
  prior.Sigma_beta = sigma_beta_scale * Matrix::Identity(data.p(), data.p());
  prior.nu = static_cast<double>(data.r());
  prior.S = static_cast<double>(data.r()) * R_hat;
  prior.c = 1.0;
  return prior;
}

}  // namespace sviglmm
