#ifndef SVIGLMM_PARAMETRIZATION_HPP
#define SVIGLMM_PARAMETRIZATION_HPP

#include <map>
#include <string>
#include <vector>

#include "sviglmm/data.hpp"

namespace sviglmm {

/// Classification of the original X columns into the ordered blocks
/// [Z-columns | subject-specific | general]. `order` maps reordered
/// position -> original column index; all fit-time coordinates for beta use
/// the reordered space.
struct ColumnPartition {
  std::vector<int> order;  // length p
  Index r = 0;             // Z block size
  Index s = 0;             // subject-specific block size
  Index g = 0;             // general block size

  Index p() const { return static_cast<Index>(order.size()); }
  /// Reorder a cluster's X columns into [Z | S | G].
  Matrix reorder(const Matrix& X) const;
  /// Map a vector in reordered coordinates back to original column order.
  Vector to_original(const Vector& v) const;
  Matrix to_original(const Matrix& m) const;
};

/// Per-cluster artifacts of the partially noncentered parametrization.
struct ClusterDesign {
  Matrix C;        // r x (r+s)
  Matrix W;        // r x r tuning matrix
  Matrix W_tilde;  // r x p: [(I-W)C, 0]
  Matrix V;        // n_i x p: [Z W C, X_g]
};

/// Explicit column-class overrides by name ("subject" or "general").
using ColumnClassOverrides = std::map<std::string, std::string>;

/// Classify X columns: Z-columns from the dataset correspondence,
/// subject-specific = constant within every cluster (or overridden),
/// general = the rest.
ColumnPartition classify_columns(const Dataset& data,
                                 const ColumnClassOverrides& overrides = {});

/// Tuning matrix W_i = (Z^T Q Z + D^{-1})^{-1} D^{-1}; Q = diag(y) for
/// Poisson, Q = diag(exp(eta)/(1+exp(eta))^2) for Bernoulli.
Matrix tuning_matrix(const ClusterData& cluster, Family family, const Matrix& D,
                     const Vector& eta);

/// Build the per-cluster designs for the requested parametrization kind.
/// D_guess and beta_hat seed the tuning matrices (D = R_hat, eta = X beta_hat);
/// W_i is fixed afterwards for the whole run.
std::vector<ClusterDesign> build_parametrization(const Dataset& data,
                                                 const ColumnPartition& part,
                                                 ParametrizationKind kind,
                                                 const Matrix& D_guess,
                                                 const Vector& beta_hat_original,
                                                 Family family);

/// Rebuild designs from stored tuning matrices (used when reloading a fit).
std::vector<ClusterDesign> designs_from_tuning(const Dataset& data,
                                               const ColumnPartition& part,
                                               const std::vector<Matrix>& W);

}  // namespace sviglmm

#endif
