#ifndef SVIGLMM_DATA_HPP
#define SVIGLMM_DATA_HPP

#include <string>
#include <vector>

#include "sviglmm/types.hpp"

namespace sviglmm {

/// One cluster of observations. X columns are in the user's original order;
/// Z columns are a subset of the X columns with a leading intercept column.
struct ClusterData {
  std::string id;
  Vector y;    // responses, length n_i
  Matrix X;    // n_i x p fixed-effects design
  Matrix Z;    // n_i x r random-effects design
  Vector E;    // Poisson offsets (exposure), length n_i; empty otherwise

  Index n_obs() const { return y.size(); }
};

struct Dataset {
  std::vector<ClusterData> clusters;
  std::vector<std::string> x_names;  // length p
  std::vector<int> z_cols;           // Z column j == X column z_cols[j]

  Index n_clusters() const { return static_cast<Index>(clusters.size()); }
  Index p() const { return clusters.empty() ? 0 : clusters.front().X.cols(); }
  Index r() const { return clusters.empty() ? 0 : clusters.front().Z.cols(); }
  Index total_obs() const {
    Index n = 0;
    for (const auto& c : clusters) n += c.n_obs();
    return n;
  }
};

/// Enforces the structural invariants (ones column leading Z, Z subset of X,
/// response range per family, offsets positive and Poisson-only) and resolves
/// the Z-in-X column correspondence. Throws DataError on violation.
Dataset validate_dataset(Dataset raw, Family family);

}  // namespace sviglmm

#endif
