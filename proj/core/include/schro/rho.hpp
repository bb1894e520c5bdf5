#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "schro/ball.hpp"
#include "schro/potential.hpp"
#include "schro/report.hpp"

namespace schro {

struct RhoScan {
  int radii = 64;               // log-spaced scan radii up to the boundary cap
  double r_min_cells = 2.0;     // smallest scan radius in units of h
  double rel_tol = 1e-6;        // bisection stops at this relative bracket width
  int max_bisect = 40;
};

struct RhoResult {
  double rho = 0.0;
  bool capped = false;          // every scanned radius up to the distance to the wall was admissible
  bool refined_below = false;   // needed a smaller starting radius than the scan default
};

/// r^{2-n} times the integral of V over B(x, r).
double critical_quantity(const Potential& V, const Point& x, double r);

/// Supremum of the scanned radii with critical_quantity <= 1, refined by bisection.
/// Throws RhoBelowResolution when the smallest scan radius is already inadmissible.
RhoResult critical_radius(const Potential& V, const Point& x, const RhoScan& scan = {});

/// Critical radius at every grid node, computed on demand and cached.
class RhoField {
 public:
  explicit RhoField(Potential V, RhoScan scan = {});

  const Potential& potential() const noexcept { return V_; }
  const Grid& grid() const noexcept { return V_.grid(); }
  const RhoScan& scan() const noexcept { return scan_; }

  double at(std::size_t idx) const;
  bool capped(std::size_t idx) const;
  bool refined_below(std::size_t idx) const;
  RhoResult result(std::size_t idx) const;

  /// Uncached evaluation at an arbitrary interior point.
  RhoResult at_point(const Point& x) const;

  void compute_all() const;
  /// Largest radius that any stored value may take (the largest boundary cap).
  double max_scanned() const noexcept;

 private:
  RhoResult compute(const Point& x) const;

  Potential V_;
  RhoScan scan_;
  mutable std::vector<double> rho_;
  mutable std::vector<std::uint8_t> flags_;  // bit 0 computed, bit 1 capped, bit 2 refined below
};

/// Empirical reverse Hölder constant: sup over balls of (avg V^q)^{1/q} / avg V on cell centers.
/// Balls where avg V = 0 are tallied as degenerate and skipped.
VerificationReport reverse_holder_constant(const Potential& V, double q, std::span<const BallSpec> balls);

/// Fits the smallest (c, k0) with c^{-1} rho(x) (1 + d/rho(x))^{-k0} <= rho(y) <= c rho(x) (1 + d/rho(x))^{k0/(k0+1)}
/// over the pairs, and the largest C1 with C1 rho(x) < rho(y) < rho(x)/C1 when d <= rho(x).
/// Pairs where either rho is capped are excluded.
VerificationReport rho_equivalence_check(const RhoField& rho, std::span<const std::pair<std::size_t, std::size_t>> pairs);

struct CriticalCovering {
  std::vector<std::size_t> centers;   // grid indices, in selection order
  std::vector<double> radii;
  std::vector<bool> capped;
  std::size_t overlap = 0;            // max number of 4-fold dilated balls containing a grid node
  std::vector<std::uint32_t> first_cover;  // for each node, the first ball covering it
};

/// Greedy covering by critical balls, largest rho first. A center whose rho is capped at the box
/// wall is taken to cover the whole box.
CriticalCovering critical_covering(const RhoField& rho);

/// Recounts the overlap of the dilated balls by brute force over all (ball, node) pairs.
std::size_t recount_overlap(const RhoField& rho, const CriticalCovering& cover);

}  // namespace schro
