#include "schro/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "schro/errors.hpp"

namespace schro {

namespace {

GaussRule make_rule(int n) {
  GaussRule r;
  r.nodes.resize(static_cast<std::size_t>(n));
  r.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0, p1 = x;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[static_cast<std::size_t>(i)] = -x;
    r.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    r.weights[static_cast<std::size_t>(i)] = w;
    r.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return r;
}

}  // namespace

const GaussRule& gauss_legendre(int n) {
  if (n < 1 || n > 256) throw ContractError("Gauss-Legendre order out of range");
  static std::mutex mu;
  static std::map<int, GaussRule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, n == 1 ? GaussRule{{0.0}, {2.0}} : make_rule(n)).first;
  return it->second;
}

LogTrapezoid log_trapezoid(double t_lo, double t_hi, double step) {
  if (!(t_lo > 0.0) || !(t_hi > t_lo) || !(step > 0.0)) throw ContractError("bad log-trapezoid bounds");
  LogTrapezoid q;
  const int count = static_cast<int>(std::ceil(std::log(t_hi / t_lo) / step)) + 1;
  q.t.resize(static_cast<std::size_t>(count));
  q.w.assign(static_cast<std::size_t>(count), step);
  for (int k = 0; k < count; ++k) q.t[static_cast<std::size_t>(k)] = t_lo * std::exp(k * step);
  q.w.front() *= 0.5;
  q.w.back() *= 0.5;
  return q;
}

}  // namespace schro

namespace schro {

double integrate_log_concave(const std::function<double(double)>& G, double u_star, double rel_tol, int max_levels) {
  const double g_star = G(u_star);
  if (!std::isfinite(g_star)) throw QuadratureError("integrand peak is not finite", g_star);
  if (g_star < -740.0) return 0.0;
  // Window where the integrand exceeds e^{-50} of its peak.
  auto edge = [&](double dir) {
    double step = 0.5;
    double u = u_star;
    while (G(u + dir * step) > g_star - 50.0) {
      u += dir * step;
      step *= 2.0;
      if (step > 1e4) throw QuadratureError("integrand does not decay", step);
    }
    double lo = u, hi = u + dir * step;
    for (int i = 0; i < 60; ++i) {
      const double mid = 0.5 * (lo + hi);
      (G(mid) > g_star - 50.0 ? lo : hi) = mid;
    }
    return hi;
  };
  const double a = edge(-1.0), b = edge(1.0);
  int n = 16;
  double step = (b - a) / n;
  double sum = 0.5 * (std::exp(G(a) - g_star) + std::exp(G(b) - g_star));
  for (int k = 1; k < n; ++k) sum += std::exp(G(a + k * step) - g_star);
  double prev = sum * step;
  for (int level = 0; level < max_levels; ++level) {
    for (int k = 0; k < n; ++k) sum += std::exp(G(a + (k + 0.5) * step) - g_star);
    n *= 2;
    step *= 0.5;
    const double cur = sum * step;
    if (std::abs(cur - prev) <= rel_tol * std::abs(cur) && level >= 1) return cur * std::exp(g_star);
    prev = cur;
  }
  throw QuadratureError("log-concave quadrature did not converge", std::abs(sum * step - prev) / std::abs(prev));
}

}  // namespace schro
