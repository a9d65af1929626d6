#include "sviglmm/ncvmp.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "sviglmm/mathutil.hpp"
#include "sviglmm/stochastic.hpp"

namespace sviglmm {

LinPredCache make_linpred_cache(const ClusterDesign& design, const GlobalState& global) {
  LinPredCache c;
  c.v_mu = design.V * global.mu_beta;
  c.v_var = ((design.V * global.Sigma_beta).cwiseProduct(design.V)).rowwise().sum();
  return c;
}

GF compute_g_F_cached(const ClusterData& cluster, const ClusterDesign& design,
                      const LinPredCache& cache, const Vector& mu_i, const Matrix& Sigma_i,
                      Family family, const QuadratureRule& rule) {
  const Index n = cluster.n_obs();
  GF out;
  out.g.resize(n);
  out.F.resize(n);

  const Vector m = cache.v_mu + cluster.Z * mu_i;
  const Vector var =
      cache.v_var + ((cluster.Z * Sigma_i).cwiseProduct(cluster.Z)).rowwise().sum();

  if (family == Family::Poisson) {
    for (Index j = 0; j < n; ++j) {
      const double E = cluster.E.size() ? cluster.E[j] : 1.0;
      out.g[j] = E * std::exp(clamp_linpred(m[j] + 0.5 * var[j]));
      out.F[j] = out.g[j];
    }
  } else {
    for (Index j = 0; j < n; ++j) {
      const double s = std::sqrt(std::max(0.0, var[j]));
      out.g[j] = b_integral(1, m[j], s, rule);
      out.F[j] = b_integral(2, m[j], s, rule);
    }
  }
  return out;
}

GF compute_g_F(const ClusterData& cluster, const ClusterDesign& design,
               const GlobalState& global, const Vector& mu_i, const Matrix& Sigma_i,
               Family family, const QuadratureRule& rule) {
  return compute_g_F_cached(cluster, design, make_linpred_cache(design, global), mu_i,
                            Sigma_i, family, rule);
}

void update_local_once(const ClusterData& cluster, const ClusterDesign& design,
                       const GlobalState& global, const Matrix& P_D,
                       const LinPredCache& cache, Family family, const QuadratureRule& rule,
                       Vector& mu_i, Matrix& Sigma_i) {
  const GF gf = compute_g_F_cached(cluster, design, cache, mu_i, Sigma_i, family, rule);
  const Matrix M = P_D + cluster.Z.transpose() * gf.F.asDiagonal() * cluster.Z;
  Sigma_i = spd_inverse(M, "local update Sigma");
  const Vector rhs = cluster.Z.transpose() * (cluster.y - gf.g) -
                     P_D * (mu_i - design.W_tilde * global.mu_beta);
  mu_i += Sigma_i * rhs;
}

namespace {

Matrix precision_of_D(const GlobalState& global) {
  return global.nu_D *
         spd_inverse(global.S_D, "S_q(D)");
}

}  // namespace

int optimize_locals(const Model& model, std::span<const int> batch, const GlobalState& global,
                    LocalState& locals, double tol, int max_reps, Execution exec) {
  if (batch.empty()) return 0;
  const Matrix P_D = precision_of_D(global);
  const auto nb = static_cast<std::ptrdiff_t>(batch.size());

  std::vector<LinPredCache> caches(batch.size());
  for_each_index(nb, exec, [&](std::ptrdiff_t k) {
    caches[k] = make_linpred_cache(model.designs[batch[k]], global);
  });

  std::vector<double> change_sq(batch.size()), norm_sq(batch.size());
  int reps = 0;
  while (reps < max_reps) {
    for_each_index(nb, exec, [&](std::ptrdiff_t k) {
      const int i = batch[k];
      Vector old_mu = locals.mu[i];
      update_local_once(model.data.clusters[i], model.designs[i], global, P_D, caches[k],
                        model.family, model.rule, locals.mu[i], locals.Sigma[i]);
      change_sq[k] = (locals.mu[i] - old_mu).squaredNorm();
      norm_sq[k] = locals.mu[i].squaredNorm();
    });
    ++reps;
    const double num = std::sqrt(std::accumulate(change_sq.begin(), change_sq.end(), 0.0));
    const double den = std::sqrt(std::accumulate(norm_sq.begin(), norm_sq.end(), 0.0));
    if (num <= tol * std::max(den, 1e-300)) break;
  }
  return reps;
}

void finalize_locals(const Model& model, const GlobalState& global, LocalState& locals,
                     Execution exec) {
  std::vector<int> all(model.n());
  std::iota(all.begin(), all.end(), 0);
  optimize_locals(model, all, global, locals, 1e-11, 300, exec);
}

BetaAccum accumulate_beta(const Model& model, std::span<const int> batch,
                          const GlobalState& global, const LocalState& locals,
                          const Matrix& P_D, Execution exec, bool deterministic) {
  const Index p = model.p();
  BetaAccum acc{Matrix::Zero(p, p), Vector::Zero(p)};
  const auto nb = static_cast<std::ptrdiff_t>(batch.size());

  auto contribution = [&](int i, Matrix& G, Vector& h) {
    const auto& c = model.data.clusters[i];
    const auto& d = model.designs[i];
    const GF gf = compute_g_F(c, d, global, locals.mu[i], locals.Sigma[i], model.family,
                              model.rule);
    G.noalias() = d.W_tilde.transpose() * (P_D * d.W_tilde);
    G.noalias() += d.V.transpose() * gf.F.asDiagonal() * d.V;
    h.noalias() = d.W_tilde.transpose() * (P_D * (locals.mu[i] - d.W_tilde * global.mu_beta));
    h.noalias() += d.V.transpose() * (c.y - gf.g);
  };

  if (deterministic) {
    std::vector<Matrix> Gs(batch.size());
    std::vector<Vector> hs(batch.size());
    for_each_index(nb, exec, [&](std::ptrdiff_t k) {
      Gs[k].resize(p, p);
      hs[k].resize(p);
      contribution(batch[k], Gs[k], hs[k]);
    });
    for (std::ptrdiff_t k = 0; k < nb; ++k) {
      acc.G += Gs[k];
      acc.h += hs[k];
    }
  } else {
#ifdef _OPENMP
#pragma omp parallel num_threads(worker_threads())
    {
      Matrix G_loc = Matrix::Zero(p, p);
      Vector h_loc = Vector::Zero(p);
      Matrix G_i(p, p);
      Vector h_i(p);
#pragma omp for schedule(static) nowait
      for (std::ptrdiff_t k = 0; k < nb; ++k) {
        contribution(batch[k], G_i, h_i);
        G_loc += G_i;
        h_loc += h_i;
      }
#pragma omp critical(sviglmm_accum_beta)
      {
        acc.G += G_loc;
        acc.h += h_loc;
      }
    }
#else
    Matrix G_i(p, p);
    Vector h_i(p);
    for (std::ptrdiff_t k = 0; k < nb; ++k) {
      contribution(batch[k], G_i, h_i);
      acc.G += G_i;
      acc.h += h_i;
    }
#endif
  }
  return acc;
}

Matrix accumulate_scale(const Model& model, std::span<const int> batch,
                        const Vector& mu_beta, const Matrix& Sigma_beta,
                        const LocalState& locals, Execution exec, bool deterministic) {
  const Index r = model.r();
  Matrix acc = Matrix::Zero(r, r);
  const auto nb = static_cast<std::ptrdiff_t>(batch.size());

  auto contribution = [&](int i, Matrix& out) {
    const auto& d = model.designs[i];
    const Vector dev = locals.mu[i] - d.W_tilde * mu_beta;
    out.noalias() = dev * dev.transpose();
    out += locals.Sigma[i];
    out.noalias() += d.W_tilde * Sigma_beta * d.W_tilde.transpose();
  };

  if (deterministic) {
    std::vector<Matrix> terms(batch.size());
    for_each_index(nb, exec, [&](std::ptrdiff_t k) {
      terms[k].resize(r, r);
      contribution(batch[k], terms[k]);
    });
    for (std::ptrdiff_t k = 0; k < nb; ++k) acc += terms[k];
  } else {
#ifdef _OPENMP
#pragma omp parallel num_threads(worker_threads())
    {
      Matrix local = Matrix::Zero(r, r);
      Matrix term(r, r);
#pragma omp for schedule(static) nowait
      for (std::ptrdiff_t k = 0; k < nb; ++k) {
        contribution(batch[k], term);
        local += term;
      }
#pragma omp critical(sviglmm_accum_scale)
      acc += local;
    }
#else
    Matrix term(r, r);
    for (std::ptrdiff_t k = 0; k < nb; ++k) {
      contribution(batch[k], term);
      acc += term;
    }
#endif
  }
  return acc;
}

GlobalState update_global_full(const Model& model, const GlobalState& global,
                               const LocalState& locals, Execution exec, bool deterministic) {
  std::vector<int> all(model.n());
  std::iota(all.begin(), all.end(), 0);
  return stochastic_global_update(model, all, 1.0, global, locals, exec, deterministic);
}

double lower_bound(const Model& model, const GlobalState& global, const LocalState& locals,
                   Execution exec, bool deterministic) {
  const Index p = model.p();
  const Index r = model.r();
  const double nu = model.priors.nu;
  const double nu_q = global.nu_D;
  constexpr double log2pi = 1.8378770664093453;

  const auto S_q_llt = spd_cholesky(global.S_D, "lower bound: S_q(D)");
  const double logdet_Sq = spd_logdet(S_q_llt);
  const Matrix P_D = nu_q * symmetrize(S_q_llt.solve(Matrix::Identity(r, r)));
  const double elogdetD = logdet_Sq - r * std::log(2.0) - mvdigamma(r, 0.5 * nu_q);

  // Per-cluster terms: E log p(y_i | .) + E log p(alpha_i | .) + H(q(alpha_i)).
  std::vector<double> terms(model.n(), 0.0);
  auto cluster_term = [&](std::ptrdiff_t i) {
    const auto& c = model.data.clusters[i];
    const auto& d = model.designs[i];
    const LinPredCache cache = make_linpred_cache(d, global);
    const Vector m = cache.v_mu + c.Z * locals.mu[i];
    const Vector var =
        cache.v_var + ((c.Z * locals.Sigma[i]).cwiseProduct(c.Z)).rowwise().sum();

    double lik = 0.0;
    if (model.family == Family::Poisson) {
      for (Index j = 0; j < c.n_obs(); ++j) {
        const double E = c.E.size() ? c.E[j] : 1.0;
        lik += c.y[j] * (std::log(E) + m[j]) -
               E * std::exp(clamp_linpred(m[j] + 0.5 * var[j])) - std::lgamma(c.y[j] + 1.0);
      }
    } else {
      for (Index j = 0; j < c.n_obs(); ++j)
        lik += c.y[j] * m[j] - b_integral(0, m[j], std::sqrt(std::max(0.0, var[j])), model.rule);
    }

    const Vector dev = locals.mu[i] - d.W_tilde * global.mu_beta;
    const double quad = dev.dot(P_D * dev) + (P_D.cwiseProduct(locals.Sigma[i])).sum() +
                        (P_D.cwiseProduct(d.W_tilde * global.Sigma_beta * d.W_tilde.transpose())).sum();
    const double alpha_prior = -0.5 * r * log2pi - 0.5 * elogdetD - 0.5 * quad;

    const auto Sig_llt = spd_cholesky(locals.Sigma[i], "lower bound: Sigma_q(alpha)");
    const double alpha_entropy = 0.5 * r * (1.0 + log2pi) + 0.5 * spd_logdet(Sig_llt);

    terms[i] = lik + alpha_prior + alpha_entropy;
  };

  // Per-cluster slots summed in index order keep the bound reproducible
  // independent of thread count.
  (void)deterministic;
  for_each_index(model.n(), exec, cluster_term);
  double lb = std::accumulate(terms.begin(), terms.end(), 0.0);

  // q(beta) and its prior.
  const auto Sb_prior_llt = spd_cholesky(model.priors.Sigma_beta, "Sigma_beta prior");
  const Matrix Sb_prior_inv = Sb_prior_llt.solve(Matrix::Identity(p, p));
  lb += -0.5 * p * log2pi - 0.5 * spd_logdet(Sb_prior_llt) -
        0.5 * (global.mu_beta.dot(Sb_prior_inv * global.mu_beta) +
               (Sb_prior_inv.cwiseProduct(global.Sigma_beta)).sum());
  const auto Sb_q_llt = spd_cholesky(global.Sigma_beta, "Sigma_q(beta)");
  lb += 0.5 * p * (1.0 + log2pi) + 0.5 * spd_logdet(Sb_q_llt);

  // q(D) and its prior.
  const auto S_prior_llt = spd_cholesky(model.priors.S, "prior scale S");
  lb += 0.5 * nu * spd_logdet(S_prior_llt) - 0.5 * nu * r * std::log(2.0) -
        lmvgamma(r, 0.5 * nu) - 0.5 * (nu + r + 1.0) * elogdetD -
        0.5 * (model.priors.S.cwiseProduct(P_D)).sum();
  lb += -0.5 * nu_q * logdet_Sq + 0.5 * nu_q * r * std::log(2.0) + lmvgamma(r, 0.5 * nu_q) +
        0.5 * (nu_q + r + 1.0) * elogdetD + 0.5 * nu_q * r;

  if (!std::isfinite(lb))
    throw NumericalError("lower bound is not finite (state numerically broken)");
  return lb;
}

void run_ncvmp_phase(const Model& model, const FitConfig& config, GlobalState& global,
                     LocalState& locals, FitResult& result, double started_seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return started_seconds +
           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  std::vector<int> all(model.n());
  std::iota(all.begin(), all.end(), 0);
  const Execution exec = Execution::Parallel;

  double prev_lb = result.trace.empty() ? -std::numeric_limits<double>::infinity()
                                        : result.trace.back().lower_bound;
  bool damping_active = false;

  // Converge on the relative lower-bound increase, but only once the global
  // mean has also stopped moving, so the returned state is a fixed point.
  constexpr double kFixedPointTol = 1e-5;

  while (result.sweeps < config.max_sweeps) {
    optimize_locals(model, all, global, locals, std::numeric_limits<double>::infinity(), 1,
                    exec);
    const double a_eff = damping_active ? config.damping : 1.0;
    const Vector mu_before = global.mu_beta;
    global = stochastic_global_update(model, all, a_eff, global, locals, exec,
                                      config.deterministic);
    const double mu_move = (global.mu_beta - mu_before).norm() /
                           std::max(mu_before.norm(), 1e-300);
    const double lb = lower_bound(model, global, locals, exec, config.deterministic);
    ++result.sweeps;
    result.trace.push_back({result.sweeps, lb, a_eff, elapsed(), false});

    if (std::isfinite(prev_lb)) {
      const double diff = lb - prev_lb;
      if (diff < 0.0) {
        ++result.lb_decreases;
        if (diff < -10.0 && config.damping < 1.0) damping_active = true;
      }
      if (std::abs(diff) < config.stop_tol * std::abs(prev_lb) &&
          mu_move < 0.1 * kFixedPointTol) {
        result.converged = true;
        prev_lb = lb;
        break;
      }
    }
    prev_lb = lb;
  }
  result.seconds = elapsed();
}

void refine_tuning(Model& model, const FitConfig& config) {
  if (config.kind != ParametrizationKind::PartiallyNoncentered) return;
  const Index r = model.r();

  GlobalState global;
  LocalState locals;
  initialize_state(model, global, locals);
  std::vector<int> all(model.n());
  std::iota(all.begin(), all.end(), 0);

  double prev_lb = -std::numeric_limits<double>::infinity();
  for (int cycle = 0; cycle < 30; ++cycle) {
    optimize_locals(model, all, global, locals, std::numeric_limits<double>::infinity(), 1,
                    Execution::Parallel);
    global = update_global_full(model, global, locals, Execution::Parallel,
                                config.deterministic);
    const double lb =
        lower_bound(model, global, locals, Execution::Parallel, config.deterministic);
    if (std::isfinite(prev_lb) && std::abs(lb - prev_lb) < 1e-3 * std::abs(prev_lb)) break;
    prev_lb = lb;
  }

  const Matrix D_hat = global.nu_D > r + 1
                           ? Matrix(global.S_D / (global.nu_D - r - 1))
                           : model.R_hat;
  const Vector beta_orig = model.part.to_original(global.mu_beta);
  std::vector<Matrix> W;
  W.reserve(model.n());
  for (const auto& c : model.data.clusters)
    W.push_back(tuning_matrix(c, model.family, D_hat, c.X * beta_orig));
  model.designs = designs_from_tuning(model.data, model.part, W);
}

FitResult fit_ncvmp(const Model& model, const FitConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  FitResult result;
  initialize_state(model, result.global, result.locals);
  run_ncvmp_phase(model, config, result.global, result.locals, result, 0.0);
  finalize_locals(model, result.global, result.locals, Execution::Parallel);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace sviglmm
