#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "schro/spectral.hpp"

namespace schro {

enum class OpKind {
  Identity,
  HeatAtT,
  HeatMaximal,
  PoissonAtT,
  PoissonMaximal,
  GHeat,
  GPoisson,
  LaplaceMultiplier,
  RieszComponent,
  NegativePower,
};

const char* op_kind_name(OpKind k);
OpKind op_kind_from_name(const std::string& s);

/// Bounded function a(t) on (0, inf) defining m(lambda) = lambda * int a(t) e^{-t lambda} dt.
struct LaplaceSymbol {
  enum class Tag { Constant, Exponential, Window, Sampled };
  Tag tag = Tag::Constant;
  double amplitude = 1.0;    // A
  double rate = 1.0;         // b in A e^{-b t}
  double window = 1.0;       // T in A 1_{[0, T]}
  std::vector<double> ts;    // sampled nodes (increasing), a extended by constants outside
  std::vector<double> as;

  static LaplaceSymbol constant(double A);
  static LaplaceSymbol exponential(double A, double b);
  static LaplaceSymbol window_on(double A, double T);
  static LaplaceSymbol sampled(std::vector<double> ts, std::vector<double> as);

  double sup_norm() const;
  double a_at(double t) const;
  /// m(lambda) in closed form (sampled symbols: exact integral of the piecewise-linear a).
  double multiplier(double lambda) const;
};

const char* laplace_tag_name(LaplaceSymbol::Tag t);

/// Finite realization of a t-range: log-spaced nodes for a sup, or log-trapezoid weights for dt/t.
struct TGrid {
  enum class Role { MaximalSup, Quadrature };
  Role role = Role::MaximalSup;
  std::vector<double> t;
  std::vector<double> w;  // dt/t weights (quadrature role)

  static TGrid maximal(double t_lo, double t_hi, int M);
  /// Default sup grid [h^2/4, 4 (2L)^2] with M nodes.
  static TGrid default_maximal(const Grid& g, int M = 64);
  static TGrid quadrature(double t_lo, double t_hi, double step = 0.25);

  /// M >= 32, t_1 <= h^2, t_M >= (2L)^2 (sup role).
  void check_maximal_invariants(const Grid& g) const;
};

struct OperatorDescriptor {
  OpKind kind = OpKind::Identity;
  double t = 1.0;
  double sigma = 0.5;
  double gamma = 0.0;         // order of the negative power
  int axis = 0;               // Riesz component, 0-based
  LaplaceSymbol symbol;
  int t_count = 64;           // sup grid size for the maximal kinds
  double quad_step = 0.25;    // log-t step of the F-norm quadrature
  double p = 2.0;
  double delta = 0.0;         // smoothness exponent in use; 0 means the default 0.9 min(1, delta0)

  static OperatorDescriptor identity();
  static OperatorDescriptor heat(double t);
  static OperatorDescriptor heat_maximal(int M = 64);
  static OperatorDescriptor poisson(double sigma, double t);
  static OperatorDescriptor poisson_maximal(double sigma, int M = 64);
  static OperatorDescriptor g_heat();
  static OperatorDescriptor g_poisson();
  static OperatorDescriptor laplace(LaplaceSymbol a);
  static OperatorDescriptor riesz(int axis);
  static OperatorDescriptor negative_power(double gamma);

  /// Order gamma of Definition 3.1: the power order for negative powers, else 0.
  double gamma_order() const;
  /// 1/q = 1/p - gamma/n; infinite when the right side is not positive.
  double q_lebesgue(int n) const;
  double delta_in_use(double delta0) const;
  bool vector_valued() const;
  bool uses_sup_norm() const;  // E-norm (max); otherwise F-norm for vector kinds
  bool singular_kernel() const;

  void validate(int n, double delta0) const;
  std::string label() const;
};

/// Poisson-type symbol (1/Gamma(sigma)) int_0^inf e^{-r} e^{-a/r} r^{sigma-1} dr with a = t^2 lambda / 4.
double poisson_symbol(double sigma, double a, double rel_tol = 1e-12);
/// Same quantity via the Bessel closed form (2/Gamma(sigma)) a^{sigma/2} K_sigma(2 sqrt(a)).
double poisson_symbol_bessel(double sigma, double a);
/// t d/dt of e^{-t sqrt(lambda)} computed through the heat-derivative subordination integral.
double poisson_derivative_symbol_by_subordination(double t, double lambda);
/// lambda^{-gamma/2} via (1/Gamma(gamma/2)) int e^{-t lambda} t^{gamma/2 - 1} dt.
double negative_power_symbol_by_quadrature(double gamma, double lambda);

/// Tail residual of the dt/t quadrature of the square function, relative to the exact 1/4.
double g_quadrature_residual(const TGrid& grid, double lambda_min, double lambda_max, bool poisson);
/// Default square-function grid for a model: covers [1e-4 / s_max, 25 / s_min] in the natural scale.
TGrid default_g_grid(const SpectralModel& model, bool poisson, double step = 0.25);

/// An operator of the suite bound to a spectral model.
class Operator {
 public:
  Operator(OperatorDescriptor d, const SpectralModel& model);
  ~Operator();
  Operator(Operator&&) noexcept;

  const OperatorDescriptor& descriptor() const noexcept { return d_; }
  const SpectralModel& model() const noexcept { return *model_; }
  const TGrid* tgrid() const noexcept { return tgrid_ ? &*tgrid_ : nullptr; }

  /// Scalar kinds: Tf. Vector kinds: the pointwise E-norm (max over t) or F-norm of the slices.
  GridFunction apply(const GridFunction& f) const;

  /// Calls fn(k, slice_k) for every t-node (vector kinds) or once with k = 0 (scalar kinds).
  void for_each_slice(const GridFunction& f, const std::function<void(std::size_t, const GridFunction&)>& fn) const;
  std::size_t slice_count() const;

  /// Kernel sample at grid nodes. Vector kinds fill `slices` and return the E/F norm.
  double kernel(std::size_t x, std::size_t y, std::vector<double>* slices = nullptr) const;

  /// Reduction of a slice vector by the kind's Banach norm.
  double reduce(const std::vector<double>& slices) const;

 private:
  struct KernelEngine;
  OperatorDescriptor d_;
  const SpectralModel* model_;
  std::optional<TGrid> tgrid_;
  std::unique_ptr<KernelEngine> engine_;
  mutable std::optional<SymbolTable> poisson_table_;
  double poisson_symbol_cached(double a) const;
};

// Spec-level entry points.
GridFunction heat_apply(const SpectralModel& M, double t, const GridFunction& f);
GridFunction heat_maximal(const SpectralModel& M, const GridFunction& f, const TGrid& grid);
GridFunction poisson_sigma_apply(const SpectralModel& M, double sigma, double t, const GridFunction& f);
GridFunction poisson_maximal(const SpectralModel& M, double sigma, const GridFunction& f, const TGrid& grid);
GridFunction g_heat(const SpectralModel& M, const GridFunction& f, const TGrid& grid);
GridFunction g_poisson(const SpectralModel& M, const GridFunction& f, const TGrid& grid);
GridFunction laplace_multiplier(const SpectralModel& M, const LaplaceSymbol& a, const GridFunction& f);
GridFunction riesz_apply(const SpectralModel& M, int axis, const GridFunction& f);
GridFunction negative_power(const SpectralModel& M, double gamma, const GridFunction& f);
GridFunction negative_power_quadrature(const SpectralModel& M, double gamma, const GridFunction& f);

/// Fourth-order central difference along an axis with zero wall values and biased end stencils.
GridFunction axis_derivative(const GridFunction& u, int axis);

/// Relative defect (sum_i ||D_i u||^2 + <V u, u>) / ||f||^2 - 1 with u = L^{-1/2} f.
double riesz_defect(const SpectralModel& M, const Potential& V, const GridFunction& f);

}  // namespace schro
