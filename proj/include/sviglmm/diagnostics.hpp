#ifndef SVIGLMM_DIAGNOSTICS_HPP
#define SVIGLMM_DIAGNOSTICS_HPP

#include <optional>
#include <vector>

#include "sviglmm/ncvmp.hpp"

namespace sviglmm {

/// Additive decomposition of a cluster's local update into a message from the
/// prior and one from the likelihood of the unit. The likelihood side lives
/// on the precision scale: Z^T F Z may be singular.
struct MessagePair {
  Vector mu_rep;
  Matrix Sigma_rep;
  Matrix Sigma_lik_precision;
  bool lik_invertible = false;
  Vector mu_lik;              // defined only when lik_invertible
  Vector lik_natural_mean;    // Sigma_lik^{-1} mu_lik, always defined
};

enum class PValueSide { Lower, Upper, TwoSided };

inline PValueSide pvalue_side_from_name(const std::string& s) {
  if (s == "lower") return PValueSide::Lower;
  if (s == "upper") return PValueSide::Upper;
  if (s == "two_sided" || s == "two-sided" || s == "twosided") return PValueSide::TwoSided;
  throw ConfigError("unknown p-value side: " + s);
}

struct ClusterConflict {
  std::string cluster_id;
  int cluster_index = 0;
  MessagePair messages;
  double delta = std::numeric_limits<double>::quiet_NaN();
  double p_chi2 = std::numeric_limits<double>::quiet_NaN();
  // Scalar tails, defined when r == 1 and the likelihood precision is positive.
  double p_lower = std::numeric_limits<double>::quiet_NaN();
  double p_upper = std::numeric_limits<double>::quiet_NaN();
  double p_two_sided = std::numeric_limits<double>::quiet_NaN();
  bool p_defined = false;
  bool divergent = false;
  /// The p-value the divergence decision used.
  double decision_p = std::numeric_limits<double>::quiet_NaN();
};

struct ConflictReport {
  std::vector<ClusterConflict> clusters;
  double level = 0.05;
  PValueSide side = PValueSide::TwoSided;
};

/// mu_rep = W_tilde_i mu_q(beta), Sigma_rep = S_q(D) / nu_q(D).
void prior_message(const ClusterDesign& design, const GlobalState& global, Vector& mu_rep,
                   Matrix& Sigma_rep);

/// Sigma_lik^{-1} = Z^T F Z and mu_lik = mu_q(alpha_i) + Sigma_lik Z^T (y - g),
/// evaluated at the current local and global state.
MessagePair likelihood_message(const ClusterData& cluster, const ClusterDesign& design,
                               const GlobalState& global, const Vector& mu_i,
                               const Matrix& Sigma_i, Family family,
                               const QuadratureRule& rule);

/// Scalar conflict p-value from the normal difference model
/// alpha_diff ~ N(mu_rep - mu_lik, Sigma_rep + Sigma_lik); r must be 1.
double conflict_pvalue_scalar(const MessagePair& pair, PValueSide side);

/// Standardized discrepancy Delta = d^T (Sigma_rep + Sigma_lik)^{-1} d and
/// the chi-square upper tail P(chi2_r > Delta).
std::pair<double, double> conflict_pvalue_multivariate(const MessagePair& pair);

/// Mean absolute difference in z-scores between two p-value vectors.
/// Entries are clipped to [1e-10, 1 - 1e-10] (with a warning) before Phi^{-1}.
double zscore_discrepancy(const std::vector<double>& p_ref,
                          const std::vector<double>& p_method);

/// Conflict diagnostics for every cluster at a converged fit. Refuses stale
/// local parameters (one extra local update moving any mean by more than
/// 1e-4 relative).
ConflictReport diagnose_all(const Model& model, const GlobalState& global,
                            const LocalState& locals, double level = 0.05,
                            PValueSide side = PValueSide::TwoSided);

}  // namespace sviglmm

#endif
