#pragma once

#include "schro/grid.hpp"

namespace schro {

enum class BallClass { SubCritical, Intermediate, Critical };

const char* ball_class_name(BallClass c);

/// Classification of B(x0, s) against rho(x0): s <= rho/2, rho/2 < s < rho, s >= rho.
BallClass classify_ball(double s, double rho);

struct BallSpec {
  Point center;
  std::size_t center_index = 0;  // grid node at the center
  double radius = 0.0;
  double rho = 0.0;              // rho at the center
  bool rho_capped = false;
  BallClass cls = BallClass::SubCritical;
  bool margin_ok = false;
};

}  // namespace schro
