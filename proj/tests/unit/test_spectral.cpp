#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "schro/errors.hpp"
#include "schro/spectral.hpp"
#include "support.hpp"

using namespace schro;
using fixtures::make_point;

namespace {
constexpr double kPi = std::numbers::pi;

SpectralModel model_of(int n, int m, double L, const std::string& preset, double c = 1.0) {
  return SpectralModel::build(build_preset(Grid(n, m, L), {preset, c, {}, kInfiniteQ}));
}
}  // namespace

TEST(EigensolveAxis, RejectsCoarseGrid) {
  try {
    eigensolve_axis(std::vector<double>(4, 0.0), 0.1);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("grid too coarse"), std::string::npos);
  }
}

TEST(EigensolveAxis, FreeDirichletSine) {
  const double L = 1.0;
  const int m = 256;
  const double h = 2 * L / (m + 1);
  const auto e = eigensolve_axis(std::vector<double>(m, 0.0), h);
  const double exact = std::pow(kPi / (2 * L), 2);
  EXPECT_NEAR(e.lambda(0), exact, 1e-3 * exact);
  // Discrete closed form (4/h^2) sin^2(k pi h / (4L)).
  for (int k = 1; k <= 5; ++k)
    EXPECT_NEAR(e.lambda(k - 1), 4 / (h * h) * std::pow(std::sin(k * kPi * h / (4 * L)), 2), 1e-8 * k * k);
}

TEST(EigensolveAxis, HarmonicOscillator) {
  const int m = 512;
  const double L = 8.0, h = 2 * L / (m + 1);
  std::vector<double> v(m);
  for (int j = 0; j < m; ++j) v[static_cast<std::size_t>(j)] = std::pow(-L + (j + 1) * h, 2);
  const auto e = eigensolve_axis(v, h);
  for (int k = 0; k <= 2; ++k) EXPECT_NEAR(e.lambda(k), 2 * k + 1, 1e-3) << k;
  for (int k = 0; k <= 10; ++k) EXPECT_NEAR(e.lambda(k), 2 * k + 1, 1e-3 * (2 * k + 1)) << k;
}

TEST(SpectralModel, OrthonormalAndPositive) {
  auto M = model_of(3, 24, 2.0, "harmonic");
  EXPECT_LE(M.orthonormality_defect(), 1e-10);
  EXPECT_GT(M.lambda_min(), 0.0);
  auto Z = model_of(2, 16, 1.0, "zero");
  EXPECT_GT(Z.lambda_min(), 0.0);
}

TEST(SpectralModel, TotalSpectrumIsKroneckerSum) {
  auto M = model_of(2, 10, 1.0, "harmonic");
  Grid g = M.grid();
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point p = g.point(i);
    v[i] = p[0] * p[0] + p[1] * p[1];
  }
  auto D = SpectralModel::build(Potential::dense(g, v, kInfiniteQ));
  std::vector<double> a = M.eigenvalues(), b = D.eigenvalues();
  std::sort(a.begin(), a.end());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-9 * b[k]);
}

TEST(ApplyFunction, IdentityAndEigenAction) {
  auto M = model_of(3, 20, 2.0, "harmonic");
  const auto f = fixtures::random_smooth(M.grid(), 3);
  EXPECT_LE(distance2(M.apply([](double) { return 1.0; }, f), f), 1e-10 * norm2(f));
  const std::size_t k = M.grid().flatten({1, 0, 2, 0});
  const auto phi = M.eigenfunction(k);
  const double t = 0.3;
  const auto out = M.apply([t](double l) { return std::exp(-t * l); }, phi);
  EXPECT_LE(distance2(out, std::exp(-t * M.eigenvalues()[k]) * phi), 1e-12);
  EXPECT_LE(distance2(M.heat(t, phi), std::exp(-t * M.eigenvalues()[k]) * phi), 1e-12);
}

TEST(ApplyFunction, InversePairComposes) {
  auto M = model_of(3, 20, 2.0, "constant");
  const auto f = fixtures::random_smooth(M.grid(), 5);
  const auto g = M.apply([](double l) { return std::pow(l, -0.5); }, f);
  const auto back = M.apply([](double l) { return std::sqrt(l); }, g);
  EXPECT_LE(distance2(back, f), 1e-8 * norm2(f));
}

TEST(ApplyFunction, CutoffResidual) {
  auto M = model_of(2, 32, 2.0, "harmonic");
  const auto f = fixtures::random_smooth(M.grid(), 9);
  ApplyOptions opt;
  opt.cutoff = 50.0;
  try {
    M.apply([](double) { return 1.0; }, f, opt);
    FAIL();
  } catch (const CutoffError& e) {
    EXPECT_GT(e.required_cutoff(), 50.0);
    opt.cutoff = e.required_cutoff();
    EXPECT_NO_THROW(M.apply([](double) { return 1.0; }, f, opt));
  }
}

TEST(HeatKernel, SymmetryAndConstantFactorization) {
  auto V1 = model_of(3, 32, 2.0, "constant");
  auto V0 = model_of(3, 32, 2.0, "zero");
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> pick(0, V1.grid().size() - 1);
  for (int k = 0; k < 1000; ++k) {
    const std::size_t x = pick(rng), y = pick(rng);
    const double t = 0.01 * (1 + k % 50);
    const double a = V1.heat_kernel(t, x, y);
    EXPECT_NEAR(a, V1.heat_kernel(t, y, x), 1e-12 * std::max(1.0, std::abs(a)));
    EXPECT_NEAR(a, std::exp(-t) * V0.heat_kernel(t, x, y), 1e-10 * std::max(1.0, std::abs(a)));
  }
}

TEST(HeatKernel, FreeGaussianInterior) {
  // Lattice dispersion makes the on-diagonal relative defect about n h^2 / (16 t), so times start at 32 h^2.
  auto M = model_of(3, 255, 2.0, "zero");
  const Grid& g = M.grid();
  const double h = g.h();
  const std::size_t c = g.nearest(make_point(0, 0, 0));
  for (double t : {32 * h * h, 0.015, 0.03, 0.05}) {
    for (int off : {0, 1, 3, 6, 10}) {
      auto ij = g.unflatten(c);
      ij[0] += off;
      ij[1] += off / 2;
      const std::size_t y = g.flatten(ij);
      const double r2 = distance_sq(g.point(c), g.point(y), 3);
      if (r2 / t > 16.0) continue;
      const double free = std::pow(4 * kPi * t, -1.5) * std::exp(-r2 / (4 * t));
      EXPECT_NEAR(M.heat_kernel(t, c, y), free, 1e-2 * free) << t << " " << off;
    }
  }
}

TEST(HeatKernel, PositivityAndDomination) {
  auto V = model_of(2, 40, 2.0, "harmonic");
  auto Z = model_of(2, 40, 2.0, "zero");
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> pick(0, V.grid().size() - 1);
  for (int k = 0; k < 500; ++k) {
    const std::size_t x = pick(rng), y = pick(rng);
    const double t = std::pow(10.0, -3 + 4.0 * (k % 17) / 16.0);
    const double w = V.heat_kernel(t, x, y);
    EXPECT_GE(w, -1e-12);
    EXPECT_LE(w, Z.heat_kernel(t, x, y) + 1e-10);
  }
}

TEST(HeatSemigroup, Law) {
  auto M = model_of(3, 24, 2.0, "harmonic");
  const auto f = fixtures::random_smooth(M.grid(), 4);
  for (double s : {0.01, 0.1, 1.0})
    for (double t : {0.01, 0.1, 1.0}) EXPECT_LE(distance2(M.heat(s, M.heat(t, f)), M.heat(s + t, f)), 1e-9 * norm2(f));
}

TEST(SymbolTable, InterpolatesSmoothSymbol) {
  SymbolTable tab([](double l) { return std::exp(-0.3 * std::sqrt(l)); }, 0.5, 5000.0);
  EXPECT_FALSE(tab.direct());
  for (double l = 0.5; l < 5000; l *= 1.37) EXPECT_NEAR(tab(l), std::exp(-0.3 * std::sqrt(l)), 1e-10);
}
