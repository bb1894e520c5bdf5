#pragma once

#include <cmath>
#include <random>

#include "schro/grid.hpp"

namespace schro::fixtures {

// Sum of a few random Gaussian bumps; smooth and decaying before the walls.
inline GridFunction random_smooth(const Grid& g, std::uint64_t seed, int bumps = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-0.5 * g.half_width(), 0.5 * g.half_width());
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  std::uniform_real_distribution<double> width(0.15 * g.half_width(), 0.3 * g.half_width());
  GridFunction f(g);
  for (int b = 0; b < bumps; ++b) {
    Point c;
    for (int a = 0; a < g.dim(); ++a) c[a] = pos(rng);
    const double A = amp(rng), w = width(rng);
    for (std::size_t i = 0; i < g.size(); ++i) f.values[i] += A * std::exp(-distance_sq(g.point(i), c, g.dim()) / (w * w));
  }
  return f;
}

inline Point make_point(double x0, double x1 = 0.0, double x2 = 0.0, double x3 = 0.0) {
  Point p;
  p[0] = x0;
  p[1] = x1;
  p[2] = x2;
  p[3] = x3;
  return p;
}

}  // namespace schro::fixtures
