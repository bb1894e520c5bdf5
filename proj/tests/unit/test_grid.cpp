#include <gtest/gtest.h>

#include "schro/errors.hpp"
#include "schro/grid.hpp"
#include "support.hpp"

using namespace schro;

TEST(Grid, SpacingAndCoordinates) {
  Grid g(2, 7, 4.0);
  EXPECT_DOUBLE_EQ(g.h(), 1.0);
  EXPECT_DOUBLE_EQ(g.coord(0), -3.0);
  EXPECT_DOUBLE_EQ(g.coord(6), 3.0);
  EXPECT_EQ(g.size(), 49u);
  EXPECT_DOUBLE_EQ(g.cell_volume(), 1.0);
}

TEST(Grid, FlattenRoundTrip) {
  Grid g(3, 9, 1.0);
  for (std::size_t i = 0; i < g.size(); i += 7) EXPECT_EQ(g.flatten(g.unflatten(i)), i);
  EXPECT_EQ(g.stride(0), 81u);
  EXPECT_EQ(g.stride(2), 1u);
}

TEST(Grid, NearestAndBoundaryDistance) {
  Grid g(2, 7, 4.0);
  const auto p = fixtures::make_point(0.2, -2.9);
  const auto ij = g.unflatten(g.nearest(p));
  EXPECT_EQ(ij[0], 3);
  EXPECT_EQ(ij[1], 0);
  EXPECT_DOUBLE_EQ(g.distance_to_boundary(p), 4.0 - 2.9);
}

TEST(Grid, BallCellsMatchBruteForce) {
  Grid g(3, 15, 2.0);
  for (double r : {0.1, 0.5, 0.9, 1.7, 3.0}) {
    const auto c = fixtures::make_point(0.13, -0.4, 0.77);
    std::size_t brute = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (distance(g.point(i), c, 3) <= r) ++brute;
    EXPECT_EQ(g.count_in_ball(c, r), brute) << r;
    EXPECT_EQ(g.cells_in_ball(c, r).size(), brute);
  }
}

TEST(Grid, InnerProductWeights) {
  Grid g(2, 9, 1.0);
  GridFunction one(g, 1.0);
  EXPECT_NEAR(norm2(one), std::sqrt(g.size() * g.cell_volume()), 1e-14);
  EXPECT_THROW(inner(one, GridFunction(Grid(2, 8, 1.0), 1.0)), ContractError);
  EXPECT_THROW(Grid(5, 8, 1.0), ContractError);
}
