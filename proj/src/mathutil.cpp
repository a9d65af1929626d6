#include "sviglmm/mathutil.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace sviglmm {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double std_normal_quantile(double p) {
  return std::sqrt(2.0) * boost::math::erf_inv(2.0 * p - 1.0);
}

double chi2_upper_tail(double x, double df) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

double digamma(double x) { return boost::math::digamma(x); }

double lmvgamma(int r, double a) {
  double out = 0.25 * r * (r - 1) * std::log(M_PI);
  for (int j = 1; j <= r; ++j) out += std::lgamma(a + 0.5 * (1 - j));
  return out;
}

double mvdigamma(int r, double a) {
  double out = 0.0;
  for (int j = 1; j <= r; ++j) out += digamma(a + 0.5 * (1 - j));
  return out;
}

Eigen::LLT<Matrix> spd_cholesky(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string("Cholesky factorization failed: ") + what);
  return llt;
}

Matrix spd_inverse(const Matrix& m, const char* what) {
  const auto llt = spd_cholesky(m, what);
  Matrix inv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
  return symmetrize(inv);
}

}  // namespace sviglmm
