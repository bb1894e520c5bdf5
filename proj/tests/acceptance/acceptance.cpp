// Acceptance suite: one pass/fail line per criterion, tolerances pinned below.

#include <Eigen/Sparse>
#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>

#include "../unit/support.hpp"
#include "schro/experiment.hpp"
#include "schro/operators.hpp"
#include "schro/rho.hpp"
#include "schro/t1.hpp"
#include "schro/verify.hpp"

using namespace schro;
using fixtures::make_point;
using fixtures::random_smooth;

namespace {

constexpr double kPi = std::numbers::pi;

namespace tol {
constexpr double rho_constant = 1e-4;
constexpr double rho_harmonic = 1e-3;
constexpr double rho_seconds = 10.0;
constexpr double oscillator_rel = 1e-3;        // k <= 10, relative
constexpr double oscillator_abs_low = 1e-3;    // k <= 2, absolute
constexpr double subordination_half = 1e-8;
constexpr double subordination_bessel = 1e-7;
constexpr double g_constant_rel = 1e-6;
constexpr double multiplier_identity = 1e-10;
constexpr double multiplier_resolvent = 1e-9;
constexpr double multiplier_window = 1e-9;
constexpr double negpow = 1e-7;
constexpr double riesz_defect = 1e-3;
constexpr double kernel_symmetry = 1e-12;
constexpr double kernel_positivity = -1e-12;
constexpr double kernel_free_rel = 1e-2;
constexpr double kernel_domination = 1e-10;
constexpr double t1_doubling = 0.2;
constexpr double t1_seconds = 600.0;
constexpr double profile_spread = 10.0;
constexpr double verify_delta = 0.25;
constexpr double verify_free_rel = 1e-2;
}  // namespace tol

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Potential preset(int n, int m, double L, const std::string& name, double c = 1.0) {
  return build_preset(Grid(n, m, L), {name, c, {}, kInfiniteQ});
}

// The finite-difference operator -Laplacian + V with Dirichlet walls, assembled directly.
Eigen::SparseMatrix<double> assemble(const Potential& V, double shift = 0.0) {
  const Grid& g = V.grid();
  const int n = g.dim();
  const double ih2 = 1.0 / (g.h() * g.h());
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto ij = g.unflatten(i);
    const auto r = static_cast<int>(i);
    trip.emplace_back(r, r, 2.0 * n * ih2 + V.value(i) + shift);
    for (int a = 0; a < n; ++a) {
      const auto s = static_cast<int>(g.stride(a));
      if (ij[static_cast<std::size_t>(a)] > 0) trip.emplace_back(r, r - s, -ih2);
      if (ij[static_cast<std::size_t>(a)] < g.m() - 1) trip.emplace_back(r, r + s, -ih2);
    }
  }
  const auto N = static_cast<Eigen::Index>(g.size());
  Eigen::SparseMatrix<double> A(N, N);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

GridFunction solve(const Eigen::SparseMatrix<double>& A, const GridFunction& f) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
  const Eigen::Map<const Eigen::VectorXd> b(f.values.data(), static_cast<Eigen::Index>(f.size()));
  const Eigen::VectorXd x = ldlt.solve(b);
  return GridFunction(f.grid, std::vector<double>(x.data(), x.data() + x.size()));
}

double rel(const GridFunction& a, const GridFunction& b) { return distance2(a, b) / norm2(b); }

// 1. Critical radius closed forms.
Outcome rho_closed_forms() {
  const auto t0 = std::chrono::steady_clock::now();
  const Grid g(3, 96, 4.0);
  const Potential one = build_preset(g, {"constant", 1.0, {}, kInfiniteQ});
  const double expect1 = std::sqrt(3.0 / (4.0 * kPi));
  double err1 = 0.0;
  for (const Point& p : {make_point(0, 0, 0), make_point(1.3, -0.7, 2.1), make_point(-2.9, 2.5, 0.4),
                         make_point(0.5, 0.5, -1.5)})
    err1 = std::max(err1, std::abs(critical_radius(one, p).rho - expect1));
  const Potential quad = build_preset(g, {"harmonic", 1.0, {}, kInfiniteQ});
  const double err2 = std::abs(critical_radius(quad, make_point(0, 0, 0)).rho - std::pow(5.0 / (4.0 * kPi), 0.25));
  const double secs = seconds_since(t0);
  return {err1 <= tol::rho_constant && err2 <= tol::rho_harmonic && secs < tol::rho_seconds,
          "|rho - (3/4pi)^1/2| = " + fmt(err1) + " (tol " + fmt(tol::rho_constant) + "), |rho(0) - (5/4pi)^1/4| = " +
              fmt(err2) + " (tol " + fmt(tol::rho_harmonic) + "), " + fmt(secs) + " s"};
}

// 2. One-dimensional oscillator spectrum.
Outcome oscillator_spectrum() {
  const int m = 512;
  const double L = 8.0, h = 2 * L / (m + 1);
  std::vector<double> v(m);
  for (int j = 0; j < m; ++j) v[static_cast<std::size_t>(j)] = std::pow(-L + (j + 1) * h, 2);
  const auto e = eigensolve_axis(v, h);
  double worst_rel = 0.0, worst_abs = 0.0;
  for (int k = 0; k <= 10; ++k) {
    const double err = std::abs(e.lambda(k) - (2 * k + 1));
    worst_rel = std::max(worst_rel, err / (2 * k + 1));
    if (k <= 2) worst_abs = std::max(worst_abs, err);
  }
  return {worst_rel <= tol::oscillator_rel && worst_abs <= tol::oscillator_abs_low,
          "max rel err k<=10 " + fmt(worst_rel) + " (tol " + fmt(tol::oscillator_rel) + "), max abs err k<=2 " +
              fmt(worst_abs) + " (tol " + fmt(tol::oscillator_abs_low) + ")"};
}

// 3. Subordination identities.
Outcome subordination() {
  const auto M = SpectralModel::build(preset(2, 32, 2.0, "harmonic"));
  std::set<double> lambdas(M.eigenvalues().begin(), M.eigenvalues().end());
  double half = 0.0, bessel = 0.0;
  for (double t : {0.01, 0.1, 1.0})
    for (double l : lambdas) {
      const double a = 0.25 * t * t * l;
      half = std::max(half, std::abs(poisson_symbol(0.5, a) - std::exp(-t * std::sqrt(l))));
      for (double s : {0.25, 0.75}) bessel = std::max(bessel, std::abs(poisson_symbol(s, a) - poisson_symbol_bessel(s, a)));
    }
  const auto f = random_smooth(M.grid(), 3);
  double op = 0.0;
  for (double t : {0.01, 0.1, 1.0})
    op = std::max(op, rel(poisson_sigma_apply(M, 0.5, t, f), M.apply([t](double l) { return std::exp(-t * std::sqrt(l)); }, f)));
  return {half <= tol::subordination_half && op <= tol::subordination_half && bessel <= tol::subordination_bessel,
          "sigma=1/2 symbol err " + fmt(half) + ", operator rel err " + fmt(op) + " (tol " +
              fmt(tol::subordination_half) + "); Bessel err " + fmt(bessel) + " (tol " + fmt(tol::subordination_bessel) +
              "), " + std::to_string(lambdas.size()) + " eigenvalues x 3 times"};
}

// 4. Square-function constant.
Outcome g_constant() {
  const auto M = SpectralModel::build(preset(2, 32, 2.0, "harmonic"));
  const auto th = default_g_grid(M, false), tp = default_g_grid(M, true);
  double worst = 0.0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto f = random_smooth(M.grid(), s, 3 + static_cast<int>(s % 4));
    const double nf = norm2(f);
    worst = std::max(worst, std::abs(norm2(g_heat(M, f, th)) / (0.5 * nf) - 1.0));
    worst = std::max(worst, std::abs(norm2(g_poisson(M, f, tp)) / (0.5 * nf) - 1.0));
  }
  return {worst <= tol::g_constant_rel,
          "max | ||g f|| / (||f||/2) - 1 | over 20 f, heat and Poisson: " + fmt(worst) + " (tol " +
              fmt(tol::g_constant_rel) + ")"};
}

// 5. Laplace-transform multipliers against closed forms; the resolvent oracle is a sparse solve.
Outcome multipliers() {
  const Potential V = preset(2, 24, 1.5, "harmonic");
  const auto M = SpectralModel::build(V);
  double id = 0.0, res = 0.0, win = 0.0;
  const auto A = assemble(V, 1.0);
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const auto f = random_smooth(V.grid(), s);
    id = std::max(id, rel(laplace_multiplier(M, LaplaceSymbol::constant(1.0), f), f));
    // a = e^{-t}: m(L) = L (L + 1)^{-1} = 1 - (L + 1)^{-1}.
    res = std::max(res, rel(laplace_multiplier(M, LaplaceSymbol::exponential(1.0, 1.0), f), f - solve(A, f)));
    win = std::max(win, rel(laplace_multiplier(M, LaplaceSymbol::window_on(1.0, 0.5), f), f - M.heat(0.5, f)));
  }
  return {id <= tol::multiplier_identity && res <= tol::multiplier_resolvent && win <= tol::multiplier_window,
          "a=1 " + fmt(id) + " (tol " + fmt(tol::multiplier_identity) + "), a=e^-t vs sparse resolvent " + fmt(res) +
              " (tol " + fmt(tol::multiplier_resolvent) + "), window vs 1-e^{-TL} " + fmt(win) + " (tol " +
              fmt(tol::multiplier_window) + ")"};
}

// 6. Negative powers: semigroup law, Green-operator oracle and the two evaluation routes.
Outcome negative_powers() {
  const Potential V = preset(3, 16, 2.0, "harmonic");
  const auto M = SpectralModel::build(V);
  const auto f = random_smooth(V.grid(), 11);
  double law = 0.0, routes = 0.0;
  for (auto [a, b] : {std::pair{0.5, 0.5}, std::pair{0.5, 1.5}, std::pair{1.0, 1.0}, std::pair{0.3, 2.2}})
    law = std::max(law, rel(negative_power(M, a, negative_power(M, b, f)), negative_power(M, a + b, f)));
  for (double g : {0.5, 1.0, 2.0}) routes = std::max(routes, rel(negative_power_quadrature(M, g, f), negative_power(M, g, f)));
  const double green = rel(negative_power(M, 2.0, f), solve(assemble(V), f));
  return {law <= tol::negpow && routes <= tol::negpow && green <= tol::negpow,
          "semigroup law " + fmt(law) + ", spectral vs quadrature " + fmt(routes) + ", L^-1 vs sparse solve " +
              fmt(green) + " (tol " + fmt(tol::negpow) + ")"};
}

// 7. Riesz transforms are L2 contractions up to the reported discretization defect.
Outcome riesz_contraction() {
  const Potential V = preset(3, 128, 4.0, "harmonic");
  const auto M = SpectralModel::build(V);
  double worst_ratio = 0.0, worst_defect = 0.0;
  for (std::uint64_t s = 1; s <= 100; ++s) {
    const auto f = random_smooth(V.grid(), 1000 + s, 2 + static_cast<int>(s % 5));
    const double d = riesz_defect(M, V, f);
    worst_defect = std::max(worst_defect, std::abs(d));
    const GridFunction u = M.apply([](double l) { return 1.0 / std::sqrt(l); }, f);
    for (int a = 0; a < 3; ++a)
      worst_ratio = std::max(worst_ratio, norm2(axis_derivative(u, a)) / ((1.0 + std::abs(d)) * norm2(f)));
  }
  return {worst_ratio <= 1.0 && worst_defect <= tol::riesz_defect,
          "max ||R_i f|| / ((1 + defect) ||f||) = " + fmt(worst_ratio) + " (<= 1), max defect " + fmt(worst_defect) +
              " (tol " + fmt(tol::riesz_defect) + "), 100 f"};
}

// 8. Heat kernel structure.
Outcome heat_kernel() {
  const auto V = SpectralModel::build(preset(3, 32, 2.0, "harmonic"));
  const auto Z = SpectralModel::build(preset(3, 32, 2.0, "zero"));
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> pick(0, V.grid().size() - 1);
  double sym = 0.0, low = 0.0, dom = -1.0;
  for (int k = 0; k < 2000; ++k) {
    const std::size_t x = pick(rng), y = pick(rng);
    const double t = std::pow(10.0, -3.0 + 4.0 * (k % 23) / 22.0);
    const double w = V.heat_kernel(t, x, y);
    sym = std::max(sym, std::abs(w - V.heat_kernel(t, y, x)) / std::max(1.0, std::abs(w)));
    low = std::min(low, w);
    dom = std::max(dom, w - Z.heat_kernel(t, x, y));
  }
  // Interior comparison with the free Gaussian at t >= 32 h^2, r^2 / t <= 16.
  const auto F = SpectralModel::build(preset(3, 255, 2.0, "zero"));
  const Grid& g = F.grid();
  const double h = g.h();
  const std::size_t c = g.nearest(make_point(0, 0, 0));
  double free = 0.0;
  for (double t : {32 * h * h, 0.015, 0.03, 0.05})
    for (int off : {0, 1, 3, 6, 10}) {
      auto ij = g.unflatten(c);
      ij[0] += off;
      ij[1] += off / 2;
      const std::size_t y = g.flatten(ij);
      const double r = distance(g.point(c), g.point(y), 3);
      if (r * r / t > 16.0) continue;
      free = std::max(free, std::abs(F.heat_kernel(t, c, y) / free_heat_kernel(t, r, 3) - 1.0));
    }
  return {sym <= tol::kernel_symmetry && low >= tol::kernel_positivity && free <= tol::kernel_free_rel &&
              dom <= tol::kernel_domination,
          "asymmetry " + fmt(sym) + " (tol " + fmt(tol::kernel_symmetry) + "), min W " + fmt(low) +
              ", free-Gaussian rel err " + fmt(free) + " (tol " + fmt(tol::kernel_free_rel) + "), max W^V - W^0 " +
              fmt(dom) + " (tol " + fmt(tol::kernel_domination) + ")"};
}

// 9. T1 criteria for the operator suite on both presets.
Outcome t1_criteria() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<OperatorDescriptor> exact = {OperatorDescriptor::identity(),
                                                 OperatorDescriptor::laplace(LaplaceSymbol::constant(2.0))};
  const std::vector<OperatorDescriptor> suite = {
      OperatorDescriptor::heat_maximal(),     OperatorDescriptor::poisson_maximal(0.5),
      OperatorDescriptor::g_heat(),           OperatorDescriptor::g_poisson(),
      OperatorDescriptor::laplace(LaplaceSymbol::exponential(1.0, 1.0)),
      OperatorDescriptor::riesz(0),           OperatorDescriptor::riesz(1),
      OperatorDescriptor::riesz(2),           OperatorDescriptor::negative_power(0.5)};
  EnsemblePolicy pol;
  pol.margin = 1.0;
  T1Options opt;
  opt.margin = 0.5;
  bool pass = true;
  double nonzero_exact = 0.0, worst_delta = 0.0;
  std::size_t criteria = 0, truncated = 0;
  std::string where;
  for (const char* name : {"constant", "harmonic"}) {
    const RhoField rho(preset(3, 96, 4.0, name));
    const auto M = SpectralModel::build(rho.potential());
    const auto ens = ball_ensemble(rho, pol), dbl = ball_ensemble(rho, pol.doubled());
    auto cells = subcritical_cells(ens, rho.grid());
    const auto more = subcritical_cells(dbl, rho.grid());
    std::vector<std::size_t> all;
    std::set_union(cells.begin(), cells.end(), more.begin(), more.end(), std::back_inserter(all));
    const double d0 = rho.potential().delta0();
    for (const auto& d : exact) {
      const auto f = t1_field(Operator(d, M), opt, all);
      for (double a : {0.25, 0.5}) nonzero_exact = std::max(nonzero_exact, criterion_alpha(f, a, 0.0, ens).supremum);
      nonzero_exact = std::max(nonzero_exact, criterion_log(f, 0.0, ens).supremum);
    }
    for (const auto& d : suite) {
      const auto f = t1_field(Operator(d, M), opt, all);
      truncated += f.truncation_dominated;
      const double gamma = d.gamma_order(), delta = d.delta_in_use(d0);
      std::vector<double> alphas{-1.0};
      for (double a : {0.25, 0.5})
        if (a + gamma < std::min(1.0, delta)) alphas.push_back(a);
      for (double a : alphas) {
        const auto run = [&](const BallEnsemble& e) {
          return a < 0 ? criterion_log(f, gamma, e).supremum : criterion_alpha(f, a, gamma, e).supremum;
        };
        const double s = run(ens), s2 = run(dbl), delta_rel = relative_change(s, s2);
        ++criteria;
        if (!std::isfinite(s) || !std::isfinite(s2) || delta_rel > tol::t1_doubling) {
          pass = false;
          where += std::string(" ") + name + ":" + d.label();
        }
        if (delta_rel > worst_delta) worst_delta = delta_rel;
      }
    }
  }
  const double secs = seconds_since(t0);
  pass = pass && nonzero_exact == 0.0 && secs < tol::t1_seconds;
  return {pass, "identity/constant multiplier sup " + fmt(nonzero_exact) + " (exact 0), " + std::to_string(criteria) +
                    " criteria finite, max doubling change " + fmt(worst_delta) + " (tol " + fmt(tol::t1_doubling) +
                    "), " + std::to_string(truncated) + " fields truncation-dominated, " + fmt(secs) + " s (limit " +
                    fmt(tol::t1_seconds) + ")" + (where.empty() ? "" : "; failing:" + where)};
}

// 10. Norms of the extremal profiles are uniform across centers and scales.
Outcome profile_uniformity() {
  const RhoField rho(preset(2, 129, 4.0, "constant", 0.1));
  const Grid& g = rho.grid();
  auto ens = ball_ensemble(rho);
  std::vector<std::size_t> x0s;
  for (const auto& p : {make_point(0, 0), make_point(0.6, -0.4), make_point(-0.5, 0.3), make_point(0.2, 0.7),
                        make_point(-0.3, -0.6)})
    x0s.push_back(g.nearest(p));
  std::vector<double> fracs;
  // s = rho would make both profiles vanish identically; stay strictly below it.
  for (int k = 0; k <= 9; ++k) fracs.push_back(std::pow(1e-2, 1.0 - k / 10.0));
  for (std::size_t x : x0s) {
    std::vector<double> local;
    for (double t : fracs)
      for (double mult : {0.5, 1.0, 2.0}) local.push_back(mult * t * rho.at(x));
    add_balls(ens, rho, std::span<const std::size_t>(&x, 1), local);
  }
  const double alphas[3] = {0.25, 0.5, 0.75};
  std::vector<double> gn, fn[3];
  for (std::size_t x : x0s)
    for (double t : fracs) {
      const double r0 = rho.at(x), s = t * r0;
      gn.push_back(bmo_alpha_norm(test_function_g(g, g.point(x), s, r0), 0.0, ens).norm);
      for (int a = 0; a < 3; ++a)
        fn[a].push_back(bmo_alpha_norm(test_function_f(g, g.point(x), s, alphas[a], r0), alphas[a], ens).norm);
    }
  auto spread = [](const std::vector<double>& v) -> double {
    double lo = INFINITY, hi = 0.0;
    for (double x : v) {
      if (!(x > 0.0)) return INFINITY;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    return hi / lo;
  };
  double worst = spread(gn);
  std::string detail = "log profile " + fmt(worst);
  for (int a = 0; a < 3; ++a) {
    const double s = spread(fn[a]);
    worst = std::max(worst, s);
    detail += ", power a=" + fmt(alphas[a]) + " " + fmt(s);
  }
  return {worst <= tol::profile_spread && gn.size() >= 50,
          "max/min norm over " + std::to_string(gn.size()) + " (x0, s): " + detail + " (tol " + fmt(tol::profile_spread) + ")"};
}

// 11. Estimate bundle on both presets plus the free Gaussian constant.
Outcome verify_bundle() {
  ProbePolicy pol;
  pol.margin = 1.5;
  pol.count = 48;
  bool pass = true;
  double worst_delta = 0.0;
  std::size_t reports = 0;
  std::string failing;
  for (const char* name : {"constant", "harmonic"}) {
    const RhoField rho(preset(3, 128, 4.0, name));
    const auto M = SpectralModel::build(rho.potential());
    const EstimateVerifier ver(M, rho);
    const auto b = report_bundle(ver.run_all(pol), estimate_report_order(), tol::verify_delta);
    for (const auto& r : b.reports) {
      ++reports;
      const double d = std::isfinite(r.stability_delta) ? r.stability_delta : 0.0;
      worst_delta = std::max(worst_delta, d);
      if (!r.finite() || d > tol::verify_delta || r.evaluated == 0) {
        pass = false;
        failing += std::string(" ") + name + ":" + r.name;
      }
    }
  }
  const RhoField free(preset(3, 128, 4.0, "zero"));
  const auto F = SpectralModel::build(free.potential());
  ProbePolicy fp = pol;
  fp.tau_min = 32.0;
  const auto reps = EstimateVerifier(F, free).run(EstimateId::HeatGaussian, make_probes(EstimateId::HeatGaussian, free.grid(), fp));
  const double c = reps.front().constant, expect = std::pow(4 * kPi, -1.5);
  const double err = std::abs(c / expect - 1.0);
  pass = pass && err <= tol::verify_free_rel;
  return {pass, std::to_string(reports) + " reports finite, max stability delta " + fmt(worst_delta) + " (tol " +
                    fmt(tol::verify_delta) + "); free HEAT_GAUSSIAN constant " + fmt(c) + " vs (4pi)^-3/2 " +
                    fmt(expect) + ", rel err " + fmt(err) + " (tol " + fmt(tol::verify_free_rel) + ")" +
                    (failing.empty() ? "" : "; failing:" + failing)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// 12. Identical config and seed give byte-identical CSV bodies.
Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / ("schrolab-acceptance-" + std::to_string(::getpid()));
  ExperimentConfig c;
  c.seed = 2024;
  c.grid = {2, 95, 3.0, 1.2};
  c.ensemble.margin = c.probes.margin = 1.2;
  c.t1.margin = 0.6;
  c.potential.preset = "harmonic";
  c.operators = {OperatorDescriptor::heat_maximal(), OperatorDescriptor::riesz(0), OperatorDescriptor::negative_power(0.5)};
  c.probes.count = 12;
  c.bmo.centers = 3;
  c.bmo.scales = 4;
  c.checks = {"rho", "cover", "spectrum", "bmo", "t1", "verify", "norms"};
  std::vector<RunResult> runs;
  for (const char* dir : {"a", "b"}) {
    c.output = (root / dir).string();
    runs.push_back(run_experiment(c));
  }
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    ++files;
    differ += slurp(e.path()) != slurp(root / "b" / fs::relative(e.path(), root / "a"));
  }
  fs::remove_all(root);
  const bool ok = runs[0].exit_code != kExitError && runs[0].exit_code == runs[1].exit_code;
  return {ok && files > 20 && differ == 0,
          std::to_string(files) + " CSV files compared, " + std::to_string(differ) + " differ; exit codes " +
              std::to_string(runs[0].exit_code) + "/" + std::to_string(runs[1].exit_code)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"schrolab acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "run only these criteria (1-12)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"critical radius closed forms", rho_closed_forms},
      {"oscillator spectrum", oscillator_spectrum},
      {"subordination identities", subordination},
      {"square-function constant 1/2", g_constant},
      {"Laplace multiplier closed forms", multipliers},
      {"negative powers", negative_powers},
      {"Riesz L2 contraction", riesz_contraction},
      {"heat kernel structure", heat_kernel},
      {"T1 criteria", t1_criteria},
      {"extremal profile uniformity", profile_uniformity},
      {"kernel estimate bundle", verify_bundle},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
