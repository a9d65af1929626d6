#include "sviglmm/parametrization.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>

#include "sviglmm/mathutil.hpp"

namespace sviglmm {

Matrix ColumnPartition::reorder(const Matrix& X) const {
  Matrix out(X.rows(), X.cols());
  for (std::size_t j = 0; j < order.size(); ++j) out.col(static_cast<Index>(j)) = X.col(order[j]);
  return out;
}

Vector ColumnPartition::to_original(const Vector& v) const {
  Vector out(v.size());
  for (std::size_t j = 0; j < order.size(); ++j) out[order[j]] = v[static_cast<Index>(j)];
  return out;
}

Matrix ColumnPartition::to_original(const Matrix& m) const {
  Matrix out(m.rows(), m.cols());
  for (std::size_t a = 0; a < order.size(); ++a)
    for (std::size_t b = 0; b < order.size(); ++b)
      out(order[a], order[b]) = m(static_cast<Index>(a), static_cast<Index>(b));
  return out;
}

namespace {

bool constant_within_clusters(const Dataset& data, Index col) {
  for (const auto& c : data.clusters) {
    const double v = c.X(0, col);
    if (!(c.X.col(col).array() == v).all()) return false;
  }
  return true;
}

}  // namespace

ColumnPartition classify_columns(const Dataset& data, const ColumnClassOverrides& overrides) {
  const Index p = data.p();
  ColumnPartition part;
  part.r = data.r();

  std::vector<bool> is_z(p, false);
  for (int xj : data.z_cols) is_z[xj] = true;

  std::vector<int> subject_cols, general_cols;
  for (Index j = 0; j < p; ++j) {
    if (is_z[j]) continue;
    const std::string& name = data.x_names[static_cast<std::size_t>(j)];
    auto it = overrides.find(name);
    bool subject;
    if (it != overrides.end()) {
      if (it->second == "subject")
        subject = true;
      else if (it->second == "general")
        subject = false;
      else
        throw ConfigError("column class for '" + name + "' must be 'subject' or 'general'");
      if (subject && !constant_within_clusters(data, j))
        throw DataError("column '" + name + "' declared subject-specific but varies within a cluster");
    } else {
      subject = constant_within_clusters(data, j);
    }
    (subject ? subject_cols : general_cols).push_back(static_cast<int>(j));
  }

  part.order.reserve(p);
  for (int xj : data.z_cols) part.order.push_back(xj);
  part.order.insert(part.order.end(), subject_cols.begin(), subject_cols.end());
  part.order.insert(part.order.end(), general_cols.begin(), general_cols.end());
  part.s = static_cast<Index>(subject_cols.size());
  part.g = static_cast<Index>(general_cols.size());
  return part;
}

Matrix tuning_matrix(const ClusterData& cluster, Family family, const Matrix& D,
                     const Vector& eta) {
  Vector q(cluster.n_obs());
  if (family == Family::Poisson) {
    q = cluster.y;
  } else {
    for (Index j = 0; j < q.size(); ++j) q[j] = logistic_b(2, eta[j]);
  }
  const Matrix D_inv = spd_inverse(D, "tuning matrix: D");
  const Matrix P = cluster.Z.transpose() * q.asDiagonal() * cluster.Z + D_inv;
  return spd_cholesky(P, "tuning matrix: Z^T Q Z + D^{-1}").solve(D_inv);
}

namespace {

Matrix make_C(const ClusterData& cluster, const ColumnPartition& part) {
  const Index r = part.r;
  const Index s = part.s;
  Matrix C = Matrix::Zero(r, r + s);
  C.leftCols(r).setIdentity();
  // Subject-specific covariates enter through the first row only: the rows of
  // X_s are constant within a cluster and the leading Z column is the intercept.
  for (Index k = 0; k < s; ++k) C(0, r + k) = cluster.X(0, part.order[r + k]);
  return C;
}

ClusterDesign make_design(const ClusterData& cluster, const ColumnPartition& part,
                          const Matrix& W) {
  const Index r = part.r;
  const Index s = part.s;
  const Index g = part.g;
  const Index p = part.p();

  ClusterDesign d;
  d.C = make_C(cluster, part);
  d.W = W;

  d.W_tilde = Matrix::Zero(r, p);
  d.W_tilde.leftCols(r + s) = (Matrix::Identity(r, r) - W) * d.C;

  d.V = Matrix::Zero(cluster.n_obs(), p);
  d.V.leftCols(r + s) = cluster.Z * (W * d.C);
  for (Index k = 0; k < g; ++k) d.V.col(r + s + k) = cluster.X.col(part.order[r + s + k]);
  return d;
}

void check_subject_block(const Dataset& data, const ColumnPartition& part) {
  for (const auto& c : data.clusters)
    for (Index k = 0; k < part.s; ++k) {
      const Index col = part.order[part.r + k];
      if (!(c.X.col(col).array() == c.X(0, col)).all())
        throw DataError("subject-specific column '" + data.x_names[col] +
                        "' varies within cluster " + c.id);
    }
}

}  // namespace

std::vector<ClusterDesign> build_parametrization(const Dataset& data,
                                                 const ColumnPartition& part,
                                                 ParametrizationKind kind,
                                                 const Matrix& D_guess,
                                                 const Vector& beta_hat_original,
                                                 Family family) {
  check_subject_block(data, part);
  const Index r = part.r;
  std::vector<ClusterDesign> designs;
  designs.reserve(data.clusters.size());
  for (const auto& c : data.clusters) {
    Matrix W;
    switch (kind) {
      case ParametrizationKind::Centered:
        W = Matrix::Zero(r, r);
        break;
      case ParametrizationKind::Noncentered:
        W = Matrix::Identity(r, r);
        break;
      case ParametrizationKind::PartiallyNoncentered: {
        const Vector eta = c.X * beta_hat_original;
        W = tuning_matrix(c, family, D_guess, eta);
        break;
      }
    }
    designs.push_back(make_design(c, part, W));
  }
  return designs;
}

std::vector<ClusterDesign> designs_from_tuning(const Dataset& data,
                                               const ColumnPartition& part,
                                               const std::vector<Matrix>& W) {
  if (W.size() != data.clusters.size())
    throw ConfigError("stored tuning matrices do not match cluster count");
  check_subject_block(data, part);
  std::vector<ClusterDesign> designs;
  designs.reserve(data.clusters.size());
  for (std::size_t i = 0; i < data.clusters.size(); ++i)
    designs.push_back(make_design(data.clusters[i], part, W[i]));
  return designs;
}

}  // namespace sviglmm
