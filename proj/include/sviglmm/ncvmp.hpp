#ifndef SVIGLMM_NCVMP_HPP
#define SVIGLMM_NCVMP_HPP

#include <span>

#include "sviglmm/parallel.hpp"
#include "sviglmm/state.hpp"

namespace sviglmm {

/// g_i and the diagonal of F_i (stored as a vector) for one cluster.
struct GF {
  Vector g;
  Vector F;
};

/// Per-cluster quantities that depend only on the global state:
/// V mu_beta and diag(V Sigma_beta V^T).
struct LinPredCache {
  Vector v_mu;
  Vector v_var;
};

LinPredCache make_linpred_cache(const ClusterDesign& design, const GlobalState& global);

GF compute_g_F(const ClusterData& cluster, const ClusterDesign& design,
               const GlobalState& global, const Vector& mu_i, const Matrix& Sigma_i,
               Family family, const QuadratureRule& rule);

GF compute_g_F_cached(const ClusterData& cluster, const ClusterDesign& design,
                      const LinPredCache& cache, const Vector& mu_i, const Matrix& Sigma_i,
                      Family family, const QuadratureRule& rule);

/// One fixed-point update of q(alpha_tilde_i). g_i, F_i are evaluated once at
/// the incoming state; then Sigma, then mu using the same g_i, F_i.
/// P_D = nu_D * S_D^{-1}.
void update_local_once(const ClusterData& cluster, const ClusterDesign& design,
                       const GlobalState& global, const Matrix& P_D,
                       const LinPredCache& cache, Family family, const QuadratureRule& rule,
                       Vector& mu_i, Matrix& Sigma_i);

/// Repeat local updates for the given clusters until the relative change of
/// the concatenated means drops below tol (batch-level norm). Returns the
/// number of repetitions performed.
int optimize_locals(const Model& model, std::span<const int> batch, const GlobalState& global,
                    LocalState& locals, double tol, int max_reps, Execution exec);

/// Tightly re-optimize every cluster's local parameters at the current global
/// state so the message-consistency identities hold at convergence.
void finalize_locals(const Model& model, const GlobalState& global, LocalState& locals,
                     Execution exec);

/// Batch sums entering the global updates (Algorithm 2 step 3 / full-data
/// NCVMP): G = sum_i nu_D W~^T S^{-1} W~ + V^T F V and
/// h = sum_i nu_D W~^T S^{-1}(mu_i - W~ mu_beta) + V^T (y - g).
struct BetaAccum {
  Matrix G;
  Vector h;
};

BetaAccum accumulate_beta(const Model& model, std::span<const int> batch,
                          const GlobalState& global, const LocalState& locals,
                          const Matrix& P_D, Execution exec, bool deterministic);

/// sum_i (mu_i - W~ mu_beta)(mu_i - W~ mu_beta)^T + Sigma_i + W~ Sigma_beta W~^T,
/// evaluated at the supplied beta parameters.
Matrix accumulate_scale(const Model& model, std::span<const int> batch,
                        const Vector& mu_beta, const Matrix& Sigma_beta,
                        const LocalState& locals, Execution exec, bool deterministic);

/// Full-data NCVMP global update: identical to
/// stochastic_global_update(batch = all clusters, a_t = 1).
GlobalState update_global_full(const Model& model, const GlobalState& global,
                               const LocalState& locals, Execution exec = Execution::Parallel,
                               bool deterministic = true);

/// Evidence lower bound; finite unless the state is numerically broken.
double lower_bound(const Model& model, const GlobalState& global, const LocalState& locals,
                   Execution exec = Execution::Parallel, bool deterministic = true);

/// Improve the partially noncentered tuning matrices with a short pilot run:
/// a few loose Algorithm-1 cycles estimate D, and W_i is rebuilt from that
/// estimate (with refreshed linear predictors for the Bernoulli Q_i). The
/// prior-guess seed R_hat underestimates D when clusters carry much
/// information, leaving W_i too close to the noncentered end. No-op for the
/// centered and noncentered kinds. W_i stays fixed afterwards.
void refine_tuning(Model& model, const FitConfig& config);

/// Algorithm 1: cycle locals-then-global until the relative lower-bound
/// increase drops below stop_tol.
FitResult fit_ncvmp(const Model& model, const FitConfig& config);

/// Continue Algorithm-1 cycles from an existing state, appending to result.
/// Used standalone by fit_ncvmp and for the post-switch phase of fit_svi.
void run_ncvmp_phase(const Model& model, const FitConfig& config, GlobalState& global,
                     LocalState& locals, FitResult& result, double started_seconds);

}  // namespace sviglmm

#endif
