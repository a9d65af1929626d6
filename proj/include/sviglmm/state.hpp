#ifndef SVIGLMM_STATE_HPP
#define SVIGLMM_STATE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "sviglmm/glm.hpp"
#include "sviglmm/parametrization.hpp"
#include "sviglmm/quadrature.hpp"

namespace sviglmm {

/// Variational parameters of q(beta) = N(mu_beta, Sigma_beta) and
/// q(D) = IW(nu_D, S_D). Beta coordinates are in the reordered column space.
struct GlobalState {
  Vector mu_beta;
  Matrix Sigma_beta;
  double nu_D = 0.0;  // fixed at prior nu + n for the whole run
  Matrix S_D;
};

/// Per-cluster q(alpha_tilde_i) = N(mu[i], Sigma[i]).
struct LocalState {
  std::vector<Vector> mu;
  std::vector<Matrix> Sigma;

  Index n() const { return static_cast<Index>(mu.size()); }
};

struct FitConfig {
  ParametrizationKind kind = ParametrizationKind::PartiallyNoncentered;
  int quadrature_order = 20;
  double local_tol = 0.05;
  double stop_tol = 1e-6;
  double switch_tol = 1e-3;
  int max_sweeps = 1000;
  double damping = 1.0;  // 1 = off; applied when a large lower-bound drop appears
  std::uint64_t seed = 1;
  bool deterministic = true;

  bool stochastic = false;
  bool refine_tuning = true;  // pilot-refit the PNC tuning matrices
  int batch_size = 0;      // 0 = choose ~2% of n (at least 1)
  double step_a = 1.0;
  double step_A = 1.0;
  double step_alpha = 1.0;
  bool force_unit_step = false;  // a_t = 1 everywhere: Algorithm-1 reduction mode
  int max_local_reps = 50;

  double sigma_beta_scale = 1000.0;
  double prior_c = 1.0;
  std::optional<double> prior_nu;
  std::optional<Matrix> prior_S;

  void validate() const;
};

struct TraceRow {
  int sweep = 0;
  double lower_bound = 0.0;
  double step_size = 1.0;
  double seconds = 0.0;  // cumulative wall time at end of sweep
  bool stochastic = false;
};

struct FitResult {
  GlobalState global;
  LocalState locals;
  std::vector<TraceRow> trace;
  bool converged = false;
  int sweeps = 0;
  int switch_sweep = -1;  // -1 when no stochastic phase ran or no switch happened
  double seconds = 0.0;
  int lb_decreases = 0;   // cycles where the bound went down
};

/// Everything that stays fixed during a fit.
struct Model {
  Dataset data;
  Family family = Family::Poisson;
  ColumnPartition part;
  std::vector<ClusterDesign> designs;
  PriorSpec priors;
  QuadratureRule rule;
  Matrix R_hat;
  GlmFit glm;  // pooled fit (reordered coordinates), used for initialization

  Index n() const { return data.n_clusters(); }
  Index p() const { return part.p(); }
  Index r() const { return part.r; }
};

/// Pooled GLM fit, prior guess, priors, designs, quadrature rule.
Model prepare_model(Dataset data, Family family, const FitConfig& config,
                    const ColumnClassOverrides& overrides = {});

/// Initialization: mu_q(beta), Sigma_q(beta) from the GLM fit;
/// S_D = (nu_D - r - 1) R_hat (falls back to R_hat when nu_D <= r+1);
/// mu_q(alpha_i) = W_tilde_i mu_beta, Sigma_q(alpha_i) = R_hat.
void initialize_state(const Model& model, GlobalState& global, LocalState& locals);

}  // namespace sviglmm

#endif
