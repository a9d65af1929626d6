#include "sviglmm/data.hpp"

#include <cmath>

namespace sviglmm {

namespace {

int match_column(const Dataset& ds, Index zj) {
  // A Z column must equal the same X column in every cluster.
  const Index p = ds.p();
  for (Index xj = 0; xj < p; ++xj) {
    bool all_match = true;
    for (const auto& c : ds.clusters) {
      if (c.Z.col(zj) != c.X.col(xj)) {
        all_match = false;
        break;
      }
    }
    if (all_match) return static_cast<int>(xj);
  }
  return -1;
}

}  // namespace

Dataset validate_dataset(Dataset raw, Family family) {
  if (raw.clusters.empty()) throw DataError("dataset has no clusters");
  const Index p = raw.clusters.front().X.cols();
  const Index r = raw.clusters.front().Z.cols();
  if (p < 1) throw DataError("fixed-effects design has no columns");
  if (r < 1) throw DataError("random-effects design has no columns");

  for (std::size_t i = 0; i < raw.clusters.size(); ++i) {
    const auto& c = raw.clusters[i];
    const std::string where = "cluster " + (c.id.empty() ? std::to_string(i) : c.id);
    if (c.n_obs() < 1) throw DataError(where + " is empty");
    if (c.X.rows() != c.n_obs() || c.Z.rows() != c.n_obs())
      throw DataError(where + ": design row count does not match responses");
    if (c.X.cols() != p || c.Z.cols() != r)
      throw DataError(where + ": inconsistent design dimensions across clusters");
    if (!(c.Z.col(0).array() == 1.0).all())
      throw DataError(where + ": first column of Z must be all ones");

    for (Index j = 0; j < c.n_obs(); ++j) {
      const double yj = c.y[j];
      if (!std::isfinite(yj)) throw DataError(where + ": non-finite response");
      if (family == Family::Bernoulli) {
        if (yj != 0.0 && yj != 1.0)
          throw DataError(where + ": Bernoulli response must be 0 or 1, got " + std::to_string(yj));
      } else {
        if (yj < 0.0 || yj != std::floor(yj))
          throw DataError(where + ": Poisson response must be a nonnegative integer");
      }
    }

    if (family == Family::Poisson) {
      if (c.E.size() != 0 && c.E.size() != c.n_obs())
        throw DataError(where + ": offset length does not match responses");
      if (c.E.size() > 0 && !(c.E.array() > 0.0).all())
        throw DataError(where + ": Poisson offsets must be strictly positive");
    } else if (c.E.size() != 0) {
      throw DataError(where + ": offsets are only valid for the Poisson family");
    }
  }

  raw.z_cols.assign(static_cast<std::size_t>(r), -1);
  for (Index zj = 0; zj < r; ++zj) {
    const int xj = match_column(raw, zj);
    if (xj < 0)
      throw DataError("random-effects column " + std::to_string(zj) +
                      " does not match any fixed-effects column");
    raw.z_cols[static_cast<std::size_t>(zj)] = xj;
  }
  for (Index a = 0; a < r; ++a)
    for (Index b = a + 1; b < r; ++b)
      if (raw.z_cols[a] == raw.z_cols[b]) throw DataError("duplicate random-effects column");

  if (raw.x_names.empty()) {
    for (Index j = 0; j < p; ++j) raw.x_names.push_back("x" + std::to_string(j));
  }
  if (static_cast<Index>(raw.x_names.size()) != p)
    throw DataError("x_names length does not match design columns");

  // Default offsets to 1 for Poisson so downstream code never branches on presence.
  if (family == Family::Poisson) {
    for (auto& c : raw.clusters)
      if (c.E.size() == 0) c.E = Vector::Ones(c.n_obs());
  }
  return raw;
}

}  // namespace sviglmm
