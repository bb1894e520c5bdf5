#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "schro/bmo.hpp"
#include "schro/operators.hpp"

namespace schro {

struct T1Options {
  double margin = 1.0;                 // clearance used by the shrunken-box recomputation
  double sensitivity_threshold = 0.05; // above this the field is flagged truncation-dominated
  bool check_margin = true;
};

/// T applied to the box indicator. Vector kinds keep their slices at the requested cells so that
/// criteria can use the Banach norm of slice differences; `scalar` holds the reduced norm everywhere.
struct T1Field {
  OperatorDescriptor descriptor;
  GridFunction scalar;
  bool vector = false;
  bool sup_norm = false;
  std::vector<double> weights;             // F-norm quadrature weights
  std::vector<std::size_t> slice_cells;    // sorted
  std::vector<double> slices;              // slice_cells.size() x K, row-major
  std::size_t K = 1;

  double truncation_radius = 0.0;          // distance from the reporting region to the box wall
  double margin = 0.0;
  double margin_sensitivity = 0.0;
  bool truncation_dominated = false;

  /// Row of slice values at a cell, or nullptr when not stored.
  const double* slice_at(std::size_t cell) const;
  /// Banach norm of a slice vector.
  double norm_of(const double* v) const;
};

/// Cells of all margin-ok sub-critical balls (the cells the criteria touch).
std::vector<std::size_t> subcritical_cells(const BallEnsemble& ens, const Grid& g);

/// Scalar kinds store every cell when `needed` is empty; vector kinds store only `needed`.
T1Field t1_field(const Operator& op, const T1Options& opt = {}, std::span<const std::size_t> needed = {});

/// T1 field with a user-supplied scalar function (used for T_psi 1 = psi and for synthetic tests).
T1Field t1_from_function(const GridFunction& f);

struct CriterionRow {
  std::size_t ball = 0;
  double s = 0.0, rho = 0.0;
  double weight = 0.0;        // (rho/s)^alpha or log(rho/s)
  double oscillation = 0.0;   // |B|^{-(1+gamma/n)} int_B |T1 - (T1)_B|
  double quantity = 0.0;
};

struct CriterionReport {
  std::string weight_kind;    // "alpha" or "log"
  double alpha = 0.0, gamma = 0.0;
  std::vector<CriterionRow> rows;
  double supremum = 0.0;
  std::ptrdiff_t argmax = -1;
  std::size_t excluded_intermediate = 0;
  bool truncation_dominated = false;
};

/// Weighted oscillation over sub-critical balls (s <= rho/2), weight (rho/s)^alpha.
CriterionReport criterion_alpha(const T1Field& t1, double alpha, double gamma, const BallEnsemble& ens);
/// Same with weight log(rho/s).
CriterionReport criterion_log(const T1Field& t1, double gamma, const BallEnsemble& ens);

/// sup over centers of |B|^{-(1+gamma/n)} int_B |T1| on B = B(x, rho(x)).
VerificationReport mean_bound_gamma_check(const T1Field& t1, double gamma, const RhoField& rho,
                                          std::span<const std::size_t> centers);

/// Both sides of the pointwise multiplier criterion for T_psi f = f psi.
struct MultiplierReport {
  double sup_norm = 0.0;
  double weighted_oscillation = 0.0;
  double empirical_norm = 0.0;
  std::size_t battery = 0;
  std::size_t skipped = 0;
};

struct TestBattery {
  std::vector<GridFunction> members;
  std::vector<std::string> labels;
};

/// Extremal test functions across (x0, s), low eigenfunctions and random smooth fields.
/// `size` scales every family; doubling it doubles the battery.
TestBattery make_battery(const RhoField& rho, const SpectralModel* model, double alpha, int size, std::uint64_t seed);

MultiplierReport multiplier_criterion(const GridFunction& psi, double alpha, const BallEnsemble& ens,
                                      const TestBattery& battery);

struct OperatorNormReport {
  double max_ratio = 0.0;
  std::ptrdiff_t argmax = -1;
  std::size_t evaluated = 0;
  std::size_t skipped_zero = 0;
  std::vector<double> ratios;
};

/// max over the battery of ||Tf||_{BMO^{alpha+gamma}} / ||f||_{BMO^alpha}.
OperatorNormReport empirical_operator_norm(const Operator& op, double alpha, double gamma, const TestBattery& battery,
                                           const BallEnsemble& ens);

}  // namespace schro
