#ifndef SVIGLMM_QUADRATURE_HPP
#define SVIGLMM_QUADRATURE_HPP

#include "sviglmm/types.hpp"

namespace sviglmm {

/// Gauss-Hermite rule in the physicists' convention:
/// integral f(x) exp(-x^2) dx ~= sum_j weights[j] * f(nodes[j]).
struct QuadratureRule {
  int order = 0;
  Vector nodes;
  Vector weights;
};

/// Nodes are the roots of the Hermite polynomial H_order; weights sum to
/// sqrt(pi). Valid orders are 1..100.
QuadratureRule hermite_rule(int order);

/// E[b^(r)(mu + sigma Z)] for Z ~ N(0,1) and b(x) = log(1+exp(x)).
/// For sigma = 0 this is b^(r)(mu) exactly.
double b_integral(int r, double mu, double sigma, const QuadratureRule& rule);

/// Elementwise b_integral over equal-length vectors.
Vector b_integral_vec(int r, const Vector& mu, const Vector& sigma, const QuadratureRule& rule);

}  // namespace sviglmm

#endif
