#include <gtest/gtest.h>

#include "schro/errors.hpp"
#include "schro/t1.hpp"
#include "support.hpp"

using namespace schro;
using fixtures::make_point;

namespace {

struct Fixture2d {
  RhoField rho;
  SpectralModel model;
  BallEnsemble ens;
  std::vector<std::size_t> cells;
  Fixture2d(const std::string& preset, int m, double L, double c = 1.0, EnsemblePolicy pol = {})
      : rho(build_preset(Grid(2, m, L), {preset, c, {}, kInfiniteQ})),
        model(SpectralModel::build(rho.potential())),
        ens(ball_ensemble(rho, pol)),
        cells(subcritical_cells(ens, rho.grid())) {}
};

EnsemblePolicy with_margin(double margin) {
  EnsemblePolicy p;
  p.margin = margin;
  return p;
}

}  // namespace

TEST(T1Field, IdentityAndUnitMultiplierGiveOne) {
  Fixture2d S("constant", 65, 4.0, 0.1, with_margin(0.5));
  for (const auto& d : {OperatorDescriptor::identity(), OperatorDescriptor::laplace(LaplaceSymbol::constant(1.0))}) {
    T1Options opt;
    opt.margin = 0.5;
    const auto t = t1_field(Operator(d, S.model), opt, S.cells);
    for (double v : t.scalar.values) EXPECT_EQ(v, 1.0);
    EXPECT_FALSE(t.truncation_dominated);
    EXPECT_EQ(criterion_alpha(t, 0.25, 0.0, S.ens).supremum, 0.0);
    EXPECT_EQ(criterion_log(t, 0.0, S.ens).supremum, 0.0);
  }
}

TEST(T1Field, HeatOnConstantPotential) {
  Fixture2d S("constant", 97, 4.0, 1.0, with_margin(1.5));
  // Shrinking by half the ensemble margin leaves 0.75 between the new wall and every ball.
  T1Options opt;
  opt.margin = 0.75;
  const double t = 0.02;
  const auto f = t1_field(Operator(OperatorDescriptor::heat(t), S.model), opt, S.cells);
  for (std::size_t c : S.cells) EXPECT_NEAR(f.scalar.values[c], std::exp(-t), 1e-3);
  EXPECT_LT(f.margin_sensitivity, 0.01);
  // The E-norm is attained at the smallest grid time, where W_t 1 = e^{-t}.
  const Operator hm(OperatorDescriptor::heat_maximal(), S.model);
  const auto mx = t1_field(hm, opt, S.cells);
  const double t0 = hm.tgrid()->t.front();
  for (std::size_t c : S.cells) EXPECT_NEAR(mx.scalar.values[c], std::exp(-t0), 1e-6);
}

TEST(Criterion, InvariantUnderShiftAndHomogeneous) {
  Fixture2d S("harmonic", 65, 3.0);
  const auto f = fixtures::random_smooth(S.rho.grid(), 17);
  const auto base = t1_from_function(f);
  GridFunction c(f.grid);
  for (double& v : c.values) v = 0.75;
  const auto shifted = t1_from_function(f + c), scaled = t1_from_function(3.0 * f);
  const auto a = criterion_alpha(base, 0.25, 0.0, S.ens), b = criterion_alpha(shifted, 0.25, 0.0, S.ens);
  const auto s = criterion_alpha(scaled, 0.25, 0.0, S.ens);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_NEAR(a.rows[i].quantity, b.rows[i].quantity, 1e-12 * (1 + a.rows[i].quantity));
    EXPECT_NEAR(s.rows[i].quantity, 3.0 * a.rows[i].quantity, 1e-12 * (1 + a.rows[i].quantity));
  }
  const auto l = criterion_log(base, 0.0, S.ens);
  for (const auto& r : l.rows) {
    EXPECT_GE(r.quantity, 0.0);
    EXPECT_LE(r.s, 0.5 * r.rho * (1 + 1e-12));
  }
  EXPECT_THROW(criterion_alpha(base, 0.75, 0.5, S.ens), ContractError);
}

TEST(Criterion, LogWeightAtHalfRho) {
  Fixture2d S("constant", 97, 4.0, 0.1);
  const auto f = fixtures::random_smooth(S.rho.grid(), 2);
  const std::size_t x0 = S.rho.grid().nearest(make_point(0, 0));
  const double r[] = {0.5 * S.rho.at(x0)};
  BallEnsemble one;
  add_balls(one, S.rho, std::span<const std::size_t>(&x0, 1), r);
  ASSERT_EQ(one.balls.size(), 1u);
  const auto t = t1_from_function(f);
  const auto rep = criterion_log(t, 0.0, one);
  EXPECT_NEAR(rep.rows[0].quantity, std::log(2.0) * mean_oscillation(f, one.balls[0]), 1e-14);
}

TEST(Criterion, HeatMaximalStableUnderDoubling) {
  Fixture2d S("harmonic", 97, 4.0, 1.0, with_margin(1.0));
  const auto dbl = ball_ensemble(S.rho, with_margin(1.0).doubled());
  auto cells = subcritical_cells(dbl, S.rho.grid());
  const Operator op(OperatorDescriptor::heat_maximal(), S.model);
  const auto t = t1_field(op, {}, cells);
  const double a = criterion_alpha(t, 0.25, 0.0, S.ens).supremum, b = criterion_alpha(t, 0.25, 0.0, dbl).supremum;
  EXPECT_TRUE(std::isfinite(a));
  EXPECT_GT(a, 0.0);
  EXPECT_LE(relative_change(a, b), 0.2) << a << " " << b;
}

TEST(MeanBoundGamma, IdentityAndHeatDomination) {
  Fixture2d S("harmonic", 65, 3.0);
  std::vector<std::size_t> centers;
  for (const auto& p : {make_point(0, 0), make_point(0.5, 0.3), make_point(-0.4, 0.2)})
    centers.push_back(S.rho.grid().nearest(p));
  const auto id = t1_field(Operator(OperatorDescriptor::identity(), S.model), {}, S.cells);
  const auto r = mean_bound_gamma_check(id, 0.0, S.rho, centers);
  ASSERT_EQ(r.records.size(), centers.size());
  for (const auto& rec : r.records) EXPECT_EQ(rec.measured, 1.0);
  const auto hm = t1_field(Operator(OperatorDescriptor::heat_maximal(), S.model), {}, S.cells);
  EXPECT_LE(mean_bound_gamma_check(hm, 0.0, S.rho, centers).constant, 1 + 1e-6);
}

TEST(Multiplier, ConstantAndSmoothSymbols) {
  Fixture2d S("constant", 65, 4.0, 0.1);
  const auto bat = make_battery(S.rho, &S.model, 0.0, 3, 5);
  GridFunction one(S.rho.grid());
  for (double& v : one.values) v = 1.0;
  const auto r = multiplier_criterion(one, 0.0, S.ens, bat);
  EXPECT_EQ(r.sup_norm, 1.0);
  EXPECT_EQ(r.weighted_oscillation, 0.0);
  EXPECT_NEAR(r.empirical_norm, 1.0, 1e-14);
  const auto psi = sample(S.rho.grid(), [](const Point& p) { return std::sin(p[0]); });
  const auto s = multiplier_criterion(psi, 0.5, S.ens, make_battery(S.rho, &S.model, 0.5, 3, 5));
  EXPECT_TRUE(std::isfinite(s.weighted_oscillation));
  EXPECT_GT(s.weighted_oscillation, 0.0);
  EXPECT_LE(s.sup_norm, 1.0);
}

TEST(OperatorNorm, IdentityRatioOne) {
  Fixture2d S("harmonic", 49, 3.0);
  const auto bat = make_battery(S.rho, &S.model, 0.25, 2, 9);
  const auto r = empirical_operator_norm(Operator(OperatorDescriptor::identity(), S.model), 0.25, 0.0, bat, S.ens);
  EXPECT_EQ(r.skipped_zero, 0u);
  for (double v : r.ratios) EXPECT_NEAR(v, 1.0, 1e-14);
}
