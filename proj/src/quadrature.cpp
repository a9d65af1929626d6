#include "sviglmm/quadrature.hpp"

#include <cmath>

#include "sviglmm/mathutil.hpp"

namespace sviglmm {

namespace {
constexpr double kPiQuarterInv = 0.7511255444649425;  // pi^{-1/4}
constexpr double kSqrtPiInv = 0.5641895835477563;     // 1/sqrt(pi)
}  // namespace

QuadratureRule hermite_rule(int order) {
  if (order < 1 || order > 100)
    throw ConfigError("quadrature order must be in [1, 100], got " + std::to_string(order));

  QuadratureRule rule;
  rule.order = order;
  rule.nodes = Vector::Zero(order);
  rule.weights = Vector::Zero(order);

  const int n = order;
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    // Initial guesses for the i-th largest root (Numerical Recipes style),
    // refined by Newton iteration on the orthonormal Hermite recurrence.
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    else if (i == 1)
      z -= 1.14 * std::pow(n, 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * rule.nodes[n - 1];
    else if (i == 3)
      z = 1.91 * z - 0.91 * rule.nodes[n - 2];
    else
      z = 2.0 * z - rule.nodes[n - i + 1];

    double pp = 0.0;
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      double p1 = kPiQuarterInv;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(double(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * (1.0 + std::abs(z))) {
        converged = true;
        break;
      }
    }
    if (!converged) throw NumericalError("Hermite root iteration failed to converge");

    rule.nodes[n - 1 - i] = z;
    rule.nodes[i] = -z;
    rule.weights[i] = 2.0 / (pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

namespace {

double gh_expectation(int r, double mu, double sigma, const QuadratureRule& rule) {
  const double scale = sigma * std::sqrt(2.0);
  double acc = 0.0;
  for (int j = 0; j < rule.order; ++j)
    acc += rule.weights[j] * logistic_b(r, mu + scale * rule.nodes[j]);
  return kSqrtPiInv * acc;
}

// 12-point Gauss-Legendre rule on [-1, 1] (Newton on the recurrence).
struct LegendreRule {
  double nodes[12];
  double weights[12];
  LegendreRule() {
    constexpr int n = 12;
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double pp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p1 = 1.0, p2 = 0.0;
        for (int j = 0; j < n; ++j) {
          const double p3 = p2;
          p2 = p1;
          p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
        }
        pp = n * (z * p1 - p2) / (z * z - 1.0);
        const double z1 = z;
        z = z1 - p1 / pp;
        if (std::abs(z - z1) < 1e-16) break;
      }
      nodes[i] = -z;
      nodes[n - 1 - i] = z;
      weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
      weights[n - 1 - i] = weights[i];
    }
  }
};

double normal_pdf(double x) { return std::exp(-0.5 * x * x) * 0.3989422804014327; }
double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865476); }

// integral_0^inf f(x) w(x) dx over panels of width 2 up to x = 40; f decays
// like exp(-x) so the truncated tail is below 1e-17.
template <typename F>
double half_line_integral(F&& f) {
  static const LegendreRule gl;
  double acc = 0.0;
  for (int panel = 0; panel < 20; ++panel) {
    const double lo = 2.0 * panel;
    double panel_acc = 0.0;
    for (int j = 0; j < 12; ++j) panel_acc += gl.weights[j] * f(lo + 1.0 + gl.nodes[j]);
    acc += panel_acc;
  }
  return acc;
}

// Exact decomposition for wide Gaussians, where the convergence of the
// rescaled Hermite rule is limited by the poles of b at i*pi: a closed-form
// piece plus a remainder that decays like exp(-x) on the half-line.
double wide_b_expectation(int r, double mu, double sigma) {
  const double z = mu / sigma;
  // s(x) = sigmoid(-x) for x >= 0, evaluated stably.
  auto s = [](double x) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  };
  auto phi_m = [&](double x) { return normal_pdf((x - mu) / sigma) / sigma; };
  auto phi_p = [&](double x) { return normal_pdf((x + mu) / sigma) / sigma; };
  switch (r) {
    case 0:
      return mu * normal_cdf(z) + sigma * normal_pdf(z) +
             half_line_integral(
                 [&](double x) { return std::log1p(std::exp(-x)) * (phi_m(x) + phi_p(x)); });
    case 1:
      return normal_cdf(z) +
             half_line_integral([&](double x) { return s(x) * (phi_p(x) - phi_m(x)); });
    default:
      return half_line_integral(
          [&](double x) { return s(x) * (1.0 - s(x)) * (phi_m(x) + phi_p(x)); });
  }
}

}  // namespace

double b_integral(int r, double mu, double sigma, const QuadratureRule& rule) {
  if (sigma == 0.0) return logistic_b(r, mu);
  if (sigma <= 1.0) return gh_expectation(r, mu, sigma, rule);
  return wide_b_expectation(r, mu, sigma);
}

Vector b_integral_vec(int r, const Vector& mu, const Vector& sigma, const QuadratureRule& rule) {
  if (mu.size() != sigma.size())
    throw std::invalid_argument("b_integral_vec: mu and sigma lengths differ");
  Vector out(mu.size());
  for (Index i = 0; i < mu.size(); ++i) out[i] = b_integral(r, mu[i], sigma[i], rule);
  return out;
}

}  // namespace sviglmm
