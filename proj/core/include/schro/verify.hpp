#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "schro/report.hpp"
#include "schro/rho.hpp"
#include "schro/spectral.hpp"

namespace schro {

/// Kernel inequalities checked by fitting the smallest constant over a probe sample.
enum class EstimateId {
  HeatGaussian,
  HeatFreeComparison,
  HeatHolder,
  HeatDiffOfDiff,
  TDerivSize,
  TDerivHolder,
  TDerivMean,
  VMoment,
  TDerivIdentity,
  MaximalSize,
  MaximalHolder,
  RieszSize,
  RieszHolder,
  RieszFreeComparison,
  RieszFreeDiff,
  NegPowSize,
  NegPowHolder,
};

inline constexpr int kEstimateCount = 17;

/// Upper-case report name, e.g. "HEAT_GAUSSIAN".
const char* estimate_name(EstimateId id);
EstimateId estimate_from_name(const std::string& s);
std::vector<EstimateId> all_estimates();
/// True for the estimates whose bound carries the decay bracket raised to -N.
bool estimate_uses_n(EstimateId id);

struct ProbePolicy {
  std::size_t count = 48;          // nominal probes; twice as many are drawn for the stability check
  double margin = 1.0;             // every probe point keeps this distance to the walls
  double tau_min = 8.0;            // smallest t in units of h^2
  double tau_min_free = 32.0;      // same, for comparisons against the continuum free kernel
  double max_r2_over_t = 16.0;
  double r_min_cells = 2.0;        // smallest separation of singular-kernel probes, in units of h
  std::uint64_t seed = 1;
};

struct Probe {
  std::size_t x = 0, y = 0, z = 0;
  bool has_z = false;
  double t = 0.0;                  // 0 for time-free estimates
};

/// Probes for one estimate. The first `base` probes are the nominal set; the remainder doubles
/// its density. Draws that violate the estimate's geometric constraint are rejected and tallied.
struct ProbeSet {
  EstimateId id = EstimateId::HeatGaussian;
  ProbePolicy policy;
  std::size_t base = 0;
  std::vector<Probe> probes;
  std::size_t rejected = 0;
};

ProbeSet make_probes(EstimateId id, const Grid& grid, const ProbePolicy& policy);

struct VerifyParams {
  std::vector<int> Ns = {1, 2, 4, 8};
  double delta = 0.0;              // 0: 0.9 times the upper end of the admissible range
  double gamma = 1.0;              // order of the negative power L^{-gamma/2}
  double omega_rate = 0.2;         // omega(u) = exp(-omega_rate |u|^2) in the free comparisons
  double gauss_rate = 0.125;       // c in exp(-c |x-y|^2 / t) of the regularity bounds
  double rho_fraction = 0.25;      // |y - z| < rho_fraction rho(y) in the difference of differences
  int climb_starts = 8;            // best probes polished by lattice hill climbing
  int climb_steps = 64;            // 0 disables the polishing
};

/// Evaluates estimates on one model. Riesz and negative-power kernels are built on first use.
class EstimateVerifier {
 public:
  EstimateVerifier(const SpectralModel& model, const RhoField& rho, VerifyParams params = {});
  ~EstimateVerifier();

  /// One report per N for the bracketed estimates ("NAME[N=k]"), otherwise a single report.
  std::vector<VerificationReport> run(EstimateId id, const ProbeSet& probes) const;
  std::vector<VerificationReport> run_all(const ProbePolicy& policy) const;

  /// Smoothness exponent used by an estimate.
  double delta_for(EstimateId id) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<VerificationReport> verify_estimate(EstimateId id, const SpectralModel& model, const RhoField& rho,
                                                const ProbeSet& probes, const VerifyParams& params = {});

/// Canonical report order: enumeration order, N ascending within an estimate.
std::vector<std::string> estimate_report_order(const std::vector<int>& Ns = {1, 2, 4, 8});

/// Classical Riesz kernel -Gamma((n+1)/2) pi^{-(n+1)/2} (x - y)_axis / |x - y|^{n+1}.
double classical_riesz_kernel(const Point& x, const Point& y, int n, int axis);

/// Continuum heat kernel (4 pi t)^{-n/2} exp(-r^2 / 4t).
double free_heat_kernel(double t, double r, int n);

}  // namespace schro
