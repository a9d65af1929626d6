#ifndef SVIGLMM_TYPES_HPP
#define SVIGLMM_TYPES_HPP

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace sviglmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class Family { Bernoulli, Poisson };

inline std::string family_name(Family f) {
  return f == Family::Bernoulli ? "bernoulli" : "poisson";
}

inline Family family_from_name(const std::string& s) {
  if (s == "bernoulli" || s == "binomial" || s == "logistic") return Family::Bernoulli;
  if (s == "poisson") return Family::Poisson;
  throw std::invalid_argument("unknown family: " + s);
}

enum class ParametrizationKind { Centered, Noncentered, PartiallyNoncentered };

inline std::string parametrization_name(ParametrizationKind k) {
  switch (k) {
    case ParametrizationKind::Centered: return "centered";
    case ParametrizationKind::Noncentered: return "noncentered";
    default: return "partial";
  }
}

inline ParametrizationKind parametrization_from_name(const std::string& s) {
  if (s == "centered") return ParametrizationKind::Centered;
  if (s == "noncentered") return ParametrizationKind::Noncentered;
  if (s == "partial" || s == "partially_noncentered" || s == "pnc")
    return ParametrizationKind::PartiallyNoncentered;
  throw std::invalid_argument("unknown parametrization: " + s);
}

/// Error for malformed input data (maps to exit code 65 in the CLI).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Error for bad configuration or usage (maps to exit code 64 in the CLI).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure during fitting (broken state, Cholesky failure, ...).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sviglmm

#endif
