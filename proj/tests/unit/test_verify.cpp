#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "schro/errors.hpp"
#include "schro/verify.hpp"

using namespace schro;

namespace {

struct Model {
  RhoField rho;
  SpectralModel model;
  Model(int n, const std::string& preset, int m, double L, double c = 1.0, double q = kInfiniteQ)
      : rho(build_preset(Grid(n, m, L), {preset, c, {}, q})), model(SpectralModel::build(rho.potential())) {}
};

ProbePolicy policy(double margin, std::size_t count = 24) {
  ProbePolicy p;
  p.margin = margin;
  p.count = count;
  return p;
}

}  // namespace

TEST(EstimateIds, NamesRoundTripAndOrder) {
  for (EstimateId id : all_estimates()) EXPECT_EQ(estimate_from_name(estimate_name(id)), id);
  EXPECT_THROW(estimate_from_name("NOPE"), ContractError);
  const auto order = estimate_report_order();
  EXPECT_EQ(order.size(), 8u * 4u + 9u);
  EXPECT_EQ(order.front(), "HEAT_GAUSSIAN[N=1]");
  EXPECT_EQ(order.back(), "NEGPOW_HOLDER");
}

TEST(ClassicalKernels, RieszSignAndFreeHeatMass) {
  // (x - y) along +e1 gives a negative first component of magnitude Gamma(2)/pi^2 / r^3 in 3D.
  Point x, y;
  x[0] = 0.5;
  EXPECT_NEAR(classical_riesz_kernel(x, y, 3, 0), -1.0 / (std::numbers::pi * std::numbers::pi) / 0.125, 1e-12);
  EXPECT_EQ(classical_riesz_kernel(x, y, 3, 1), 0.0);
  EXPECT_THROW(classical_riesz_kernel(x, x, 3, 0), ContractError);
  // 1D mass by a fine Riemann sum.
  double mass = 0.0;
  for (int k = -8000; k <= 8000; ++k) mass += free_heat_kernel(0.3, k * 1e-3, 1) * 1e-3;
  EXPECT_NEAR(mass, 1.0, 1e-9);
}

TEST(Probes, DeterministicAndSatisfyConstraints) {
  const Grid g(2, 161, 4.0);
  const ProbePolicy pol = policy(1.0, 32);
  for (EstimateId id : all_estimates()) {
    const ProbeSet a = make_probes(id, g, pol), b = make_probes(id, g, pol);
    ASSERT_EQ(a.probes.size(), 2 * pol.count) << estimate_name(id);
    EXPECT_EQ(a.base, pol.count);
    for (std::size_t k = 0; k < a.probes.size(); ++k) {
      const Probe &p = a.probes[k], &q = b.probes[k];
      EXPECT_TRUE(p.x == q.x && p.y == q.y && p.z == q.z && p.t == q.t);
      for (std::size_t idx : {p.x, p.y}) EXPECT_GE(g.distance_to_boundary(g.point(idx)), pol.margin - 1e-12);
      const double r = distance(g.point(p.x), g.point(p.y), 2);
      switch (id) {
        case EstimateId::HeatHolder:
          EXPECT_LT(distance(g.point(p.y), g.point(p.z), 2), std::sqrt(p.t));
          break;
        case EstimateId::TDerivHolder:
          EXPECT_LE(distance(g.point(p.x), g.point(p.z), 2), std::sqrt(p.t));
          break;
        case EstimateId::HeatDiffOfDiff:
          EXPECT_LT(4.0 * distance(g.point(p.y), g.point(p.z), 2), r);
          break;
        case EstimateId::MaximalHolder:
        case EstimateId::RieszHolder:
        case EstimateId::NegPowHolder: {
          const double s = distance(g.point(p.y), g.point(p.z), 2);
          EXPECT_GT(s, 0.0);
          EXPECT_GT(r, 2.0 * s);
          break;
        }
        case EstimateId::RieszFreeDiff:
          EXPECT_GE(distance(g.point(p.z), g.point(p.y), 2), 2.0 * r);
          break;
        default: break;
      }
      if (p.t > 0.0) EXPECT_LE(r * r / p.t, pol.max_r2_over_t + 1e-12);
      const bool singular = id >= EstimateId::MaximalSize;
      if (singular) EXPECT_NE(p.x, p.y);
    }
  }
  ProbePolicy other = pol;
  other.seed = 2;
  const auto a = make_probes(EstimateId::RieszSize, g, pol), c = make_probes(EstimateId::RieszSize, g, other);
  bool differs = false;
  for (std::size_t k = 0; k < a.probes.size(); ++k) differs |= a.probes[k].x != c.probes[k].x;
  EXPECT_TRUE(differs);
}

TEST(Probes, RejectTinyBoxAndEmptyTimeRange) {
  EXPECT_THROW(make_probes(EstimateId::HeatGaussian, Grid(2, 33, 1.0), policy(0.9)), ContractError);
  // 32 h^2 > margin^2 / 8 on a coarse grid.
  EXPECT_THROW(make_probes(EstimateId::HeatFreeComparison, Grid(2, 63, 4.0), policy(1.0)), ContractError);
}

TEST(VerifyEstimate, FreeHeatGaussianConstant) {
  // Oracle: (4 pi t)^{-n/2} e^{-r^2/4t} / (t^{-n/2} e^{-r^2/5t}) peaks at r = 0 with value (4 pi)^{-n/2};
  // the capped rho of V = 0 makes the bracket exactly 1 for every N.
  Model M(2, "zero", 127, 4.0);
  ProbePolicy pol = policy(1.25);
  pol.tau_min = 32.0;
  const auto reps = verify_estimate(EstimateId::HeatGaussian, M.model, M.rho,
                                    make_probes(EstimateId::HeatGaussian, M.rho.grid(), pol));
  ASSERT_EQ(reps.size(), 4u);
  for (const auto& r : reps) {
    EXPECT_NEAR(r.constant / (1.0 / (4.0 * std::numbers::pi)), 1.0, 0.01) << r.name;
    EXPECT_LE(r.stability_delta, 0.25);
  }
}

TEST(VerifyEstimate, TimeDerivativeIdentityOnConstantPotential) {
  // V = 1: W_t V = W_t 1 = -d/dt W_t 1 away from the walls.
  Model M(2, "constant", 127, 4.0);
  const auto reps = verify_estimate(EstimateId::TDerivIdentity, M.model, M.rho,
                                    make_probes(EstimateId::TDerivIdentity, M.rho.grid(), policy(1.0, 32)));
  ASSERT_EQ(reps.size(), 1u);
  EXPECT_GT(reps[0].evaluated, 10u);
  EXPECT_LE(reps[0].constant, 1e-8);
  for (const auto& rec : reps[0].records) EXPECT_NEAR(rec.bound, std::exp(-rec.key[4]), 2e-3);
}

TEST(VerifyEstimate, VMomentOnConstantPotential) {
  // Left side is the Gaussian integral pi^{n/2}; the fitted ratio pi^{n/2} t^{1-delta/2} rho^delta
  // is largest at t = rho^2.
  Model M(2, "constant", 95, 4.0);
  const double rho = 1.0 / std::sqrt(std::numbers::pi);
  const auto reps = verify_estimate(EstimateId::VMoment, M.model, M.rho,
                                    make_probes(EstimateId::VMoment, M.rho.grid(), policy(1.0, 32)));
  const auto& r = reps.at(0);
  EXPECT_GT(r.evaluated, 10u);
  for (const auto& rec : r.records) {
    EXPECT_NEAR(rec.measured, std::numbers::pi, 1e-3 * std::numbers::pi);
    EXPECT_LE(rec.key[4], rho * rho * (1 + 1e-9));
  }
  EXPECT_LE(r.constant, std::numbers::pi * rho * rho * 1.001);
}

TEST(VerifyEstimate, ConstantsAreOrderInvariant) {
  Model M(2, "harmonic", 95, 4.0);
  VerifyParams params;
  params.climb_steps = 0;
  ProbeSet set = make_probes(EstimateId::HeatHolder, M.rho.grid(), policy(1.0));
  set.base = set.probes.size();
  const auto a = verify_estimate(EstimateId::HeatHolder, M.model, M.rho, set, params);
  std::reverse(set.probes.begin(), set.probes.end());
  const auto b = verify_estimate(EstimateId::HeatHolder, M.model, M.rho, set, params);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].constant, b[k].constant);
    EXPECT_GE(a[k].constant, 0.0);
  }
}

TEST(VerifyEstimate, RejectsParametersOutsideRange) {
  Model M(2, "constant", 127, 4.0);
  VerifyParams p;
  p.delta = 1.0;
  const Grid& g = M.rho.grid();
  EXPECT_THROW(verify_estimate(EstimateId::HeatDiffOfDiff, M.model, M.rho,
                               make_probes(EstimateId::HeatDiffOfDiff, g, policy(1.25, 4)), p),
               ContractError);
  EXPECT_THROW(verify_estimate(EstimateId::RieszHolder, M.model, M.rho,
                               make_probes(EstimateId::RieszHolder, g, policy(1.0, 4)), p),
               ContractError);
  // Riesz estimates need q > n.
  Model low(2, "constant", 127, 4.0, 1.0, 1.5);
  EXPECT_THROW(verify_estimate(EstimateId::RieszSize, low.model, low.rho,
                               make_probes(EstimateId::RieszSize, g, policy(1.0, 4))),
               ContractError);
  // A probe set for one estimate cannot feed another.
  EXPECT_THROW(verify_estimate(EstimateId::HeatGaussian, M.model, M.rho,
                               make_probes(EstimateId::TDerivSize, g, policy(1.0, 4))),
               ContractError);
}

TEST(VerifyEstimate, BracketedEstimatesGrowWithN) {
  Model M(2, "harmonic", 95, 4.0);
  const auto reps = verify_estimate(EstimateId::TDerivSize, M.model, M.rho,
                                    make_probes(EstimateId::TDerivSize, M.rho.grid(), policy(1.0)));
  ASSERT_EQ(reps.size(), 4u);
  for (std::size_t k = 1; k < reps.size(); ++k) EXPECT_GE(reps[k].constant, reps[k - 1].constant);
  EXPECT_EQ(reps[2].name, "TDERIV_SIZE[N=4]");
}

TEST(VerifyEstimate, FreeComparisonConstantFallsWithQ) {
  // V = 4 has rho^2 = 1/(4 pi) below most probe times, so (sqrt(t)/rho)^{2 - n/q} grows with q.
  double prev = std::numeric_limits<double>::infinity();
  for (double q : {2.0, 4.0, kInfiniteQ}) {
    Model M(2, "constant", 127, 4.0, 4.0, q);
    const auto r = verify_estimate(EstimateId::HeatFreeComparison, M.model, M.rho,
                                   make_probes(EstimateId::HeatFreeComparison, M.rho.grid(), policy(1.25)));
    EXPECT_LE(r[0].constant, prev * 1.05) << "q = " << q;
    prev = r[0].constant;
  }
}

TEST(VerifyEstimate, AllFiniteAndStableOnPresets) {
  for (const char* preset : {"constant", "harmonic"}) {
    Model M(2, preset, 95, 3.0);
    const EstimateVerifier v(M.model, M.rho);
    const auto bundle = report_bundle(v.run_all(policy(1.2, 24)), estimate_report_order());
    EXPECT_EQ(bundle.reports.size(), estimate_report_order().size());
    for (std::size_t k = 0; k < bundle.reports.size(); ++k) {
      const auto& r = bundle.reports[k];
      EXPECT_EQ(r.name, estimate_report_order()[k]);
      EXPECT_TRUE(r.finite()) << preset << " " << r.name;
      EXPECT_GE(r.constant, 0.0);
      EXPECT_LE(r.stability_delta, 0.25) << preset << " " << r.name;
    }
    EXPECT_EQ(bundle.overall, Verdict::Consistent) << bundle.summary;
  }
}

TEST(VerifyEstimate, RieszFreeDefectMidRangeOnZeroPotential) {
  Model M(3, "zero", 95, 4.0);
  const auto r = verify_estimate(EstimateId::RieszFreeComparison, M.model, M.rho,
                                 make_probes(EstimateId::RieszFreeComparison, M.rho.grid(), policy(1.5, 24)));
  EXPECT_EQ(r[0].evaluated, 0u);  // bound vanishes for V = 0
  EXPECT_GT(r[0].excluded_zero_bound, 0u);
  EXPECT_LE(r[0].extras.at("mid_range_relative_defect"), 0.05);
}
