#ifndef SVIGLMM_MATHUTIL_HPP
#define SVIGLMM_MATHUTIL_HPP

#include <Eigen/Cholesky>
#include <cmath>

#include "sviglmm/types.hpp"

namespace sviglmm {

// Linear predictors are clamped to this window before exponentiation.
inline constexpr double kLinPredClamp = 30.0;

inline double clamp_linpred(double x) {
  return x < -kLinPredClamp ? -kLinPredClamp : (x > kLinPredClamp ? kLinPredClamp : x);
}

/// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// r-th derivative of b(x) = log(1+exp(x)), r in {0,1,2}.
inline double logistic_b(int r, double x) {
  switch (r) {
    case 0: return log1pexp(x);
    case 1: return sigmoid(x);
    default: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
  }
}

double std_normal_cdf(double x);
double std_normal_quantile(double p);
/// Upper tail P(chi^2_df > x) via the regularized incomplete gamma function.
double chi2_upper_tail(double x, double df);
double digamma(double x);

/// log of the multivariate gamma function Gamma_r(a).
double lmvgamma(int r, double a);
/// Multivariate digamma: sum_{j=1..r} psi(a + (1-j)/2).
double mvdigamma(int r, double a);

/// Cholesky of a symmetric positive definite matrix; throws NumericalError on failure.
Eigen::LLT<Matrix> spd_cholesky(const Matrix& m, const char* what);
/// Inverse via Cholesky, symmetrized.
Matrix spd_inverse(const Matrix& m, const char* what);
inline double spd_logdet(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}
inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// 64-bit FNV-1a, used for config hashes and RNG stream derivation.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
  return fnv1a64(s.data(), s.size(), h);
}

/// Derive an independent RNG stream seed from a base seed and a label.
inline std::uint64_t derive_stream(std::uint64_t seed, const std::string& label) {
  return fnv1a64(label, seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
}

}  // namespace sviglmm

#endif
