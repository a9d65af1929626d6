#include "sviglmm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "sviglmm/mathutil.hpp"

namespace sviglmm {

void prior_message(const ClusterDesign& design, const GlobalState& global, Vector& mu_rep,
                   Matrix& Sigma_rep) {
  mu_rep = design.W_tilde * global.mu_beta;
  Sigma_rep = global.S_D / global.nu_D;
}

MessagePair likelihood_message(const ClusterData& cluster, const ClusterDesign& design,
                               const GlobalState& global, const Vector& mu_i,
                               const Matrix& Sigma_i, Family family,
                               const QuadratureRule& rule) {
  const GF gf = compute_g_F(cluster, design, global, mu_i, Sigma_i, family, rule);

  MessagePair pair;
  prior_message(design, global, pair.mu_rep, pair.Sigma_rep);
  pair.Sigma_lik_precision =
      symmetrize(cluster.Z.transpose() * gf.F.asDiagonal() * cluster.Z);
  const Vector score = cluster.Z.transpose() * (cluster.y - gf.g);
  pair.lik_natural_mean = pair.Sigma_lik_precision * mu_i + score;

  Eigen::LLT<Matrix> llt(pair.Sigma_lik_precision);
  if (llt.info() == Eigen::Success) {
    // Also reject numerically near-singular precisions.
    const Vector diag = llt.matrixL().toDenseMatrix().diagonal();
    if ((diag.array() > 1e-12).all()) {
      pair.lik_invertible = true;
      pair.mu_lik = mu_i + llt.solve(score);
    }
  }
  return pair;
}

double conflict_pvalue_scalar(const MessagePair& pair, PValueSide side) {
  if (pair.mu_rep.size() != 1)
    throw ConfigError("scalar conflict p-value requires r = 1");
  if (!pair.lik_invertible)
    throw NumericalError("conflict p-value undefined: likelihood precision is zero");
  const double d = pair.mu_rep[0] - pair.mu_lik[0];
  const double s2 = pair.Sigma_rep(0, 0) + 1.0 / pair.Sigma_lik_precision(0, 0);
  const double lower = std_normal_cdf(-d / std::sqrt(s2));
  switch (side) {
    case PValueSide::Lower: return lower;
    case PValueSide::Upper: return 1.0 - lower;
    default: return 2.0 * std::min(lower, 1.0 - lower);
  }
}

std::pair<double, double> conflict_pvalue_multivariate(const MessagePair& pair) {
  if (!pair.lik_invertible)
    throw NumericalError("conflict p-value undefined: singular likelihood precision");
  const Matrix Sigma_lik =
      spd_inverse(pair.Sigma_lik_precision, "likelihood message precision");
  const Matrix cov = pair.Sigma_rep + Sigma_lik;
  const Vector d = pair.mu_rep - pair.mu_lik;
  const double delta = d.dot(spd_cholesky(cov, "conflict covariance").solve(d));
  const double p = chi2_upper_tail(delta, static_cast<double>(d.size()));
  return {delta, p};
}

double zscore_discrepancy(const std::vector<double>& p_ref,
                          const std::vector<double>& p_method) {
  if (p_ref.size() != p_method.size())
    throw std::invalid_argument("zscore_discrepancy: length mismatch");
  if (p_ref.empty()) return 0.0;
  constexpr double lo = 1e-10, hi = 1.0 - 1e-10;
  bool clipped = false;
  auto z = [&](double p) {
    if (p < lo || p > hi) {
      clipped = true;
      p = std::clamp(p, lo, hi);
    }
    return std_normal_quantile(p);
  };
  double acc = 0.0;
  for (std::size_t i = 0; i < p_ref.size(); ++i) acc += std::abs(z(p_ref[i]) - z(p_method[i]));
  if (clipped)
    std::cerr << "sviglmm: p-values clipped to [1e-10, 1 - 1e-10] for z-score comparison\n";
  return acc / static_cast<double>(p_ref.size());
}

namespace {

void check_locals_current(const Model& model, const GlobalState& global,
                          const LocalState& locals) {
  const Matrix P_D = global.nu_D * spd_inverse(global.S_D, "S_q(D)");
  for (Index i = 0; i < model.n(); ++i) {
    Vector mu = locals.mu[i];
    Matrix Sigma = locals.Sigma[i];
    const LinPredCache cache = make_linpred_cache(model.designs[i], global);
    update_local_once(model.data.clusters[i], model.designs[i], global, P_D, cache,
                      model.family, model.rule, mu, Sigma);
    const double rel = (mu - locals.mu[i]).norm() / std::max(locals.mu[i].norm(), 1e-12);
    if (rel > 1e-4)
      throw NumericalError(
          "local variational parameters are stale (cluster " +
          model.data.clusters[i].id +
          " moved by " + std::to_string(rel) + "); re-optimize locals before diagnosing");
  }
}

}  // namespace

ConflictReport diagnose_all(const Model& model, const GlobalState& global,
                            const LocalState& locals, double level, PValueSide side) {
  check_locals_current(model, global, locals);

  ConflictReport report;
  report.level = level;
  report.side = side;
  report.clusters.resize(model.n());

  for_each_index(model.n(), Execution::Parallel, [&](std::ptrdiff_t i) {
    ClusterConflict c;
    c.cluster_index = static_cast<int>(i);
    c.cluster_id = model.data.clusters[i].id;
    c.messages = likelihood_message(model.data.clusters[i], model.designs[i], global,
                                    locals.mu[i], locals.Sigma[i], model.family, model.rule);
    if (c.messages.lik_invertible) {
      c.p_defined = true;
      auto [delta, p_chi2] = conflict_pvalue_multivariate(c.messages);
      c.delta = delta;
      c.p_chi2 = p_chi2;
      if (model.r() == 1) {
        c.p_lower = conflict_pvalue_scalar(c.messages, PValueSide::Lower);
        c.p_upper = 1.0 - c.p_lower;
        c.p_two_sided = 2.0 * std::min(c.p_lower, c.p_upper);
        switch (side) {
          case PValueSide::Lower: c.decision_p = c.p_lower; break;
          case PValueSide::Upper: c.decision_p = c.p_upper; break;
          default: c.decision_p = c.p_two_sided;
        }
      } else {
        c.decision_p = c.p_chi2;
      }
      c.divergent = c.decision_p < level;
    }
    report.clusters[i] = std::move(c);
  });

  return report;
}

}  // namespace sviglmm
