#pragma once

#include <functional>
#include <vector>

namespace schro {

/// Gauss-Legendre rule on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Cached rule with n points (1 <= n <= 256).
const GaussRule& gauss_legendre(int n);

/// Integral of f over [a, b] with the n-point Gauss-Legendre rule.
template <class Fn>
double gauss_integrate(Fn&& f, double a, double b, int n) {
  const GaussRule& g = gauss_legendre(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double s = 0.0;
  for (std::size_t k = 0; k < g.nodes.size(); ++k) s += g.weights[k] * f(mid + half * g.nodes[k]);
  return s * half;
}

/// Log-spaced nodes with trapezoid weights for integrals of the form \int g(t) dt/t.
struct LogTrapezoid {
  std::vector<double> t;
  std::vector<double> w;  // weights for dt/t, i.e. the log-step (halved at the ends)
};

/// Nodes t_k = t_lo * exp(k * step) up to the first node >= t_hi.
LogTrapezoid log_trapezoid(double t_lo, double t_hi, double step);

}  // namespace schro

namespace schro {

/// Integral over the real line of exp(G(u)) for a concave G with maximizer u_star.
/// The window is grown until G drops 50 below its peak; the trapezoid step is halved until two
/// successive estimates agree to rel_tol. Throws QuadratureError when that does not happen.
double integrate_log_concave(const std::function<double(double)>& G, double u_star, double rel_tol = 1e-13,
                             int max_levels = 12);

}  // namespace schro
