#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "schro/ball.hpp"
#include "schro/report.hpp"
#include "schro/rho.hpp"

namespace schro {

/// Lattice of centers snapped to grid nodes times log-spaced radii.
struct EnsemblePolicy {
  int centers_per_axis = 7;
  int radii_per_decade = 4;
  double r_min_cells = 2.1;  // smallest radius in units of h
  double r_max = 0.0;        // 0: limited by the box
  double margin = 0.0;       // extra clearance from the wall beyond the ball itself
  double center_span = 0.6;  // centers fill [-span L, span L] per axis
  bool rho_relative = true;  // also radii rho/2, rho/2 10^{-k/d}, rho, 2 rho at every center
  std::uint64_t seed = 0;    // recorded only; the lattice has no random part

  /// Twice the centers per axis (2c - 1, nested) and twice the radii per decade.
  EnsemblePolicy doubled() const;
};

struct BallEnsemble {
  std::vector<BallSpec> balls;
  EnsemblePolicy policy;
  std::size_t count(BallClass c) const;
};

/// Margin-ok balls only; throws "box too small" when none fit.
BallEnsemble ball_ensemble(const RhoField& rho, const EnsemblePolicy& policy = {});

/// Adds balls centred at the given nodes with the given radii (kept if they fit).
void add_balls(BallEnsemble& ens, const RhoField& rho, std::span<const std::size_t> centers,
               std::span<const double> radii);

/// Mean of f over the cell centers in B.
double ball_mean(const GridFunction& f, const BallSpec& B);

/// ((1/|B|) int_B |f - f_B|^p)^{1/p} by cell-center quadrature; needs >= 8 cells.
double mean_oscillation(const GridFunction& f, const BallSpec& B, double p = 1.0);

struct OscillationRow {
  std::size_t ball = 0;
  double mean = 0.0;            // f_B
  double oscillation = 0.0;     // L^p mean oscillation
  double weighted_osc = 0.0;    // |B|^{-alpha/n} oscillation
  double mean_abs = 0.0;        // L^p mean of |f|
  double weighted_mean = 0.0;   // |B|^{-alpha/n} mean_abs, critical-or-larger balls only (else 0)
  bool in_osc = true;           // counted in the oscillation supremum
};

struct OscillationReport {
  std::vector<OscillationRow> rows;
  double alpha = 0.0, p = 1.0;
  double sup_oscillation = 0.0;   // condition (i)
  double sup_mean = 0.0;          // condition (ii)
  double norm = 0.0;              // max of the two
  bool mean_condition_dropped = false;  // no critical-or-larger ball fits the box
};

struct NormOptions {
  double p = 1.0;
  bool osc_below_rho_only = false;  // ask (i) only on balls with s < rho(x)
};

OscillationReport bmo_alpha_norm(const GridFunction& f, double alpha, const BallEnsemble& ens,
                                 const NormOptions& opt = {});

/// |B(x0, s)|^{-alpha/n} with the Euclidean ball volume.
double volume_weight(int n, double s, double alpha);

/// Extremal profiles: log plateau and power plateau, zero beyond rho0 = rho(x0).
GridFunction test_function_g(const Grid& g, const Point& x0, double s, double rho0);
GridFunction test_function_f(const Grid& g, const Point& x0, double s, double alpha, double rho0);

/// sup over balls with r < rho of |f_B| / ((1 + log(rho/r)) norm) for alpha = 0,
/// or |f_B| / (norm rho^alpha) for alpha > 0.
VerificationReport mean_value_bound_check(const GridFunction& f, const BallEnsemble& ens, double alpha, double norm);

/// Both sides of the Campanato description: Hölder seminorm on sampled pairs and sup |f| rho^{-alpha}.
struct CampanatoRow {
  double holder = 0.0;
  double weighted_sup = 0.0;
  double norm = 0.0;
  double ratio = 0.0;  // norm / (holder + weighted_sup)
};
CampanatoRow campanato_table(const GridFunction& f, const RhoField& rho, double alpha, double norm,
                             std::size_t pairs = 4000, std::uint64_t seed = 1);

}  // namespace schro
