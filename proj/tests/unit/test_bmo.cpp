#include <gtest/gtest.h>

#include <numbers>

#include "schro/bmo.hpp"
#include "schro/errors.hpp"
#include "support.hpp"

using namespace schro;
using fixtures::make_point;

namespace {
constexpr double kPi = std::numbers::pi;

// V = c on a 2-d box: rho = 1 / sqrt(pi c).
RhoField constant_field(double c, int m = 97, double L = 4.0) {
  return RhoField(build_preset(Grid(2, m, L), {"constant", c, {}, kInfiniteQ}));
}

BallSpec ball_at(const RhoField& rho, const Point& p, double s) {
  BallEnsemble e;
  const std::size_t idx = rho.grid().nearest(p);
  const double r[] = {s};
  add_balls(e, rho, std::span<const std::size_t>(&idx, 1), r);
  return e.balls.at(0);
}
}  // namespace

TEST(Ensemble, ClassesPopulatedAndDeterministic) {
  const auto rho = constant_field(0.1);
  EXPECT_NEAR(rho.at(rho.grid().nearest(make_point(0, 0))), 1 / std::sqrt(0.1 * kPi), 1e-5);
  const auto a = ball_ensemble(rho), b = ball_ensemble(rho);
  ASSERT_EQ(a.balls.size(), b.balls.size());
  for (std::size_t i = 0; i < a.balls.size(); ++i) {
    EXPECT_EQ(a.balls[i].center_index, b.balls[i].center_index);
    EXPECT_EQ(a.balls[i].radius, b.balls[i].radius);
    EXPECT_TRUE(a.balls[i].margin_ok);
    EXPECT_GT(a.balls[i].radius, 2 * rho.grid().h());
  }
  for (auto c : {BallClass::SubCritical, BallClass::Intermediate, BallClass::Critical}) EXPECT_GT(a.count(c), 0u);
  const auto d = ball_ensemble(rho, EnsemblePolicy{}.doubled());
  EXPECT_GT(d.balls.size(), a.balls.size());
}

TEST(Ensemble, RejectsTinyRadiusCap) {
  const auto rho = constant_field(0.1, 33);
  EnsemblePolicy p;
  p.r_max = 1.5 * rho.grid().h();
  try {
    ball_ensemble(rho, p);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("box too small"), std::string::npos);
  }
  p = {};
  p.radii_per_decade = 3;
  EXPECT_THROW(ball_ensemble(rho, p), ContractError);
}

TEST(MeanOscillation, ConstantShiftAndJensen) {
  const auto rho = constant_field(0.1);
  const Grid& g = rho.grid();
  const auto ens = ball_ensemble(rho);
  GridFunction c(g);
  for (double& v : c.values) v = 3.25;
  const auto f = fixtures::random_smooth(g, 4);
  const auto f2 = f + c;
  for (const auto& B : ens.balls) {
    EXPECT_EQ(mean_oscillation(c, B), 0.0);
    EXPECT_NEAR(mean_oscillation(f2, B), mean_oscillation(f, B), 1e-12);
    EXPECT_GE(mean_oscillation(f, B, 2.0), mean_oscillation(f, B) * (1 - 1e-12));
  }
}

TEST(MeanOscillation, LinearFunctionScalesWithRadius) {
  // Fine-grid reference on one big ball, against the closed form 4 / (3 pi) for the unit disk.
  const auto fine = constant_field(0.1, 801, 4.0);
  const auto xf = sample(fine.grid(), [](const Point& p) { return p[0]; });
  const double s_ref = 3.0;
  const double c_ref = mean_oscillation(xf, ball_at(fine, make_point(0, 0), s_ref)) / s_ref;
  EXPECT_NEAR(c_ref, 4 / (3 * kPi), 1e-3);
  const auto rho = constant_field(0.1);
  const auto x1 = sample(rho.grid(), [](const Point& p) { return p[0]; });
  for (const auto& B : ball_ensemble(rho).balls) {
    const double h_over_s = rho.grid().h() / B.radius;
    EXPECT_NEAR(mean_oscillation(x1, B) / B.radius, c_ref, 0.5 * h_over_s * c_ref) << B.radius;
  }
}

TEST(MeanOscillation, BallBelowResolution) {
  const auto rho = constant_field(0.1, 33);
  BallSpec B = ball_at(rho, make_point(0, 0), 3.0 * rho.grid().h());
  B.radius = 0.9 * rho.grid().h();
  GridFunction f(rho.grid());
  try {
    mean_oscillation(f, B);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("ball below resolution"), std::string::npos);
  }
}

TEST(BmoNorm, ConstantFunction) {
  const auto rho = constant_field(0.1);
  const auto ens = ball_ensemble(rho);
  GridFunction c(rho.grid());
  for (double& v : c.values) v = -2.5;
  const auto r = bmo_alpha_norm(c, 0.0, ens);
  EXPECT_EQ(r.sup_oscillation, 0.0);
  EXPECT_NEAR(r.sup_mean, 2.5, 1e-14);
  EXPECT_NEAR(r.norm, 2.5, 1e-14);
  EXPECT_FALSE(r.mean_condition_dropped);
  EXPECT_THROW(bmo_alpha_norm(c, 1.5, ens), ContractError);
}

TEST(BmoNorm, HomogeneousSubadditiveAndJensen) {
  const auto rho = constant_field(0.1);
  const auto ens = ball_ensemble(rho);
  const auto f = fixtures::random_smooth(rho.grid(), 8), g = fixtures::random_smooth(rho.grid(), 9);
  for (double alpha : {0.0, 0.5}) {
    const auto a = bmo_alpha_norm(f, alpha, ens);
    EXPECT_EQ(bmo_alpha_norm(2.0 * f, alpha, ens).norm, 2.0 * a.norm);
    const auto b = bmo_alpha_norm(g, alpha, ens), s = bmo_alpha_norm(f + g, alpha, ens);
    EXPECT_LE(s.sup_oscillation, a.sup_oscillation + b.sup_oscillation + 1e-10);
    EXPECT_GE(bmo_alpha_norm(f, alpha, ens, {2.0, false}).sup_oscillation, a.sup_oscillation * (1 - 1e-12));
    EXPECT_LE(bmo_alpha_norm(f, alpha, ens, {1.0, true}).sup_oscillation, a.sup_oscillation);
  }
}

TEST(TestFunctions, ProfilesAndErrors) {
  const Grid g(2, 97, 4.0);
  const Point x0 = g.point(g.nearest(make_point(0.5, -0.25)));
  const double rho0 = 1.5, s = 0.4;
  const auto gf = test_function_g(g, x0, s, rho0);
  EXPECT_DOUBLE_EQ(gf.values[g.nearest(x0)], std::log(rho0 / s));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = distance(g.point(i), x0, 2);
    if (r > rho0) EXPECT_EQ(gf.values[i], 0.0);
    EXPECT_LE(gf.values[i], std::log(rho0 / s) + 1e-15);
  }
  EXPECT_EQ(max_abs(test_function_g(g, x0, rho0, rho0)), 0.0);
  EXPECT_THROW(test_function_g(g, x0, 2.0, rho0), ContractError);

  const auto ff = test_function_f(g, x0, s, 0.5, rho0);
  EXPECT_DOUBLE_EQ(ff.values[g.nearest(x0)], std::sqrt(rho0) - std::sqrt(s));
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_GE(ff.values[i], 0.0);
    if (distance(g.point(i), x0, 2) > rho0) EXPECT_EQ(ff.values[i], 0.0);
  }
  const auto one = test_function_f(g, x0, 0.5, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(one.values[g.nearest(x0)], 0.5);
  EXPECT_THROW(test_function_f(g, x0, s, 1.2, rho0), ContractError);
}

TEST(TestFunctions, NormsUniformAcrossSweep) {
  const auto rho = constant_field(0.1, 129, 4.0);
  const Grid& g = rho.grid();
  auto ens = ball_ensemble(rho);
  std::vector<std::size_t> x0s;
  for (const auto& p : {make_point(0, 0), make_point(0.6, -0.4), make_point(-0.5, 0.3), make_point(0.2, 0.7),
                        make_point(-0.3, -0.6)})
    x0s.push_back(g.nearest(p));
  std::vector<double> ratios;
  for (int k = 0; k <= 9; ++k) ratios.push_back(std::pow(1e-2, 1.0 - k / 9.0));
  std::vector<double> local;
  for (double t : ratios)
    for (double mult : {0.5, 1.0, 2.0}) local.push_back(mult * t * rho.at(x0s[0]));
  add_balls(ens, rho, x0s, local);
  std::vector<double> gn, fn[3];
  const double alphas[3] = {0.25, 0.5, 0.75};
  for (std::size_t x : x0s)
    for (double t : ratios) {
      const double r0 = rho.at(x), s = t * r0;
      gn.push_back(bmo_alpha_norm(test_function_g(g, g.point(x), s, r0), 0.0, ens).norm);
      for (int a = 0; a < 3; ++a)
        fn[a].push_back(bmo_alpha_norm(test_function_f(g, g.point(x), s, alphas[a], r0), alphas[a], ens).norm);
    }
  ASSERT_GE(gn.size(), 50u);
  auto spread = [](const std::vector<double>& v) {
    std::vector<double> nz;
    for (double x : v)
      if (x > 0) nz.push_back(x);
    return *std::max_element(nz.begin(), nz.end()) / *std::min_element(nz.begin(), nz.end());
  };
  EXPECT_LE(spread(gn), 10.0);
  for (auto& v : fn) EXPECT_LE(spread(v), 10.0);
}

TEST(MeanValueBound, ConstantOddAndExtremal) {
  const auto rho = constant_field(0.1);
  const Grid& g = rho.grid();
  const auto ens = ball_ensemble(rho);
  GridFunction one(g);
  for (double& v : one.values) v = 1.0;
  const auto r = mean_value_bound_check(one, ens, 0.0, 1.0);
  ASSERT_GE(r.argmax, 0);
  const auto& best = r.records[static_cast<std::size_t>(r.argmax)];
  EXPECT_NEAR(r.constant, 1.0 / (1.0 + std::log(best.key[2] / best.key[1])), 1e-12);
  for (const auto& rec : r.records) EXPECT_LE(rec.key[1] / rec.key[2], best.key[1] / best.key[2] * (1 + 1e-12));

  // Odd in x1 with centers on x1 = 0.
  const auto x1 = sample(g, [](const Point& p) { return p[0]; });
  BallEnsemble axis;
  std::vector<std::size_t> cs;
  for (double y : {-1.0, 0.0, 1.0}) cs.push_back(g.nearest(make_point(0, y)));
  const double radii[] = {0.3, 0.6, 1.2};
  add_balls(axis, rho, cs, radii);
  EXPECT_LE(mean_value_bound_check(x1, axis, 0.0, 1.0).constant, 1e-14);

  // g_{x0,s} nearly saturates the bound at B(x0, s).
  const std::size_t x0 = g.nearest(make_point(0, 0));
  const double r0 = rho.at(x0), s = 0.15 * r0;
  auto ens2 = ens;
  const double rs[] = {s, 2 * s};
  add_balls(ens2, rho, std::span<const std::size_t>(&x0, 1), rs);
  const auto gf = test_function_g(g, g.point(x0), s, r0);
  const double norm = bmo_alpha_norm(gf, 0.0, ens2).norm;
  const auto rep = mean_value_bound_check(gf, ens2, 0.0, norm);
  ASSERT_EQ(ens2.balls.size(), ens.balls.size() + 2);
  const BallSpec& at = ens2.balls[ens2.balls.size() - 2];
  ASSERT_EQ(at.radius, s);
  const double here = std::abs(ball_mean(gf, at)) / ((1 + std::log(r0 / s)) * norm);
  EXPECT_GE(here, rep.constant / 4);
}

TEST(Campanato, BothSidesReported) {
  const auto rho = constant_field(0.1);
  const Grid& g = rho.grid();
  const std::size_t x0 = g.nearest(make_point(0, 0));
  const auto f = test_function_f(g, g.point(x0), 0.3, 0.5, rho.at(x0));
  const double norm = bmo_alpha_norm(f, 0.5, ball_ensemble(rho)).norm;
  const auto row = campanato_table(f, rho, 0.5, norm);
  EXPECT_GT(row.holder, 0.0);
  EXPECT_GT(row.weighted_sup, 0.0);
  EXPECT_GT(row.ratio, 0.0);
  EXPECT_TRUE(std::isfinite(row.ratio));
}
