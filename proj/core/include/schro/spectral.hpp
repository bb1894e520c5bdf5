#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <vector>

#include "schro/grid.hpp"
#include "schro/potential.hpp"

namespace schro {

/// Eigenpairs of (1/h^2) tridiag(-1, 2, -1) + diag(v) with Dirichlet ends.
/// Columns of phi are orthonormal under the weight h, eigenvalues ascending.
struct AxisEigen {
  Eigen::VectorXd lambda;
  Eigen::MatrixXd phi;
};

AxisEigen eigensolve_axis(const std::vector<double>& v, double h, int axis = 0);

using Symbol = std::function<double(double)>;

struct ApplyOptions {
  double cutoff = std::numeric_limits<double>::infinity();  // energy cutoff on total eigenvalues
  double residual_tol = 1e-8;                               // allowed dropped fraction of ||f||_2
};

/// Discrete L = -Delta + V on the box with Dirichlet walls and its functional calculus.
///
/// Separable mode stores one axis eigendecomposition per dimension; the total operator is their
/// Kronecker sum and coefficient vectors use the grid's flat multi-index layout. Dense mode stores
/// a full eigendecomposition of the n-dimensional matrix.
class SpectralModel {
 public:
  static SpectralModel build(const Potential& V, std::size_t dense_cap = kDefaultDenseCap);

  const Grid& grid() const noexcept { return grid_; }
  bool separable() const noexcept { return separable_; }
  const std::vector<AxisEigen>& axes() const noexcept { return axes_; }
  double lambda_min() const noexcept { return lambda_min_; }
  double lambda_max() const noexcept { return lambda_max_; }

  /// Total eigenvalue of every coefficient slot.
  const std::vector<double>& eigenvalues() const noexcept { return lambda_; }

  /// Coefficients <f, phi_k> under the discrete inner product.
  std::vector<double> forward(const GridFunction& f) const;
  /// sum_k c_k phi_k.
  GridFunction backward(const std::vector<double>& c) const;

  /// sum_k phi(lambda_k) <f, phi_k> phi_k, optionally truncated at an energy cutoff.
  GridFunction apply(const Symbol& phi, const GridFunction& f, const ApplyOptions& opt = {}) const;
  /// Same as apply on precomputed coefficients.
  GridFunction apply_coefficients(const Symbol& phi, const std::vector<double>& c, const ApplyOptions& opt = {}) const;

  /// e^{-tL} f; factorized per axis in separable mode.
  GridFunction heat(double t, const GridFunction& f) const;
  /// Applies one m x m matrix per axis (separable mode only).
  GridFunction apply_axis_matrices(const std::vector<Eigen::MatrixXd>& mats, const GridFunction& f) const;
  /// Per-axis matrix phi diag(g(lambda)) h phi^T.
  Eigen::MatrixXd axis_function_matrix(int axis, const Symbol& g) const;

  /// W_t(x, y) for grid indices x, y.
  double heat_kernel(double t, std::size_t x, std::size_t y) const;

  /// Eigenfunction for a coefficient slot.
  GridFunction eigenfunction(std::size_t k) const;

  /// max |<phi_j, phi_k> - delta_jk| over the stored eigenvectors (per axis in separable mode).
  double orthonormality_defect() const;

  /// Eigenvector entry phi_k(x) for dense mode or the axis factor for separable mode.
  double axis_phi(int axis, int k, int j) const { return axes_[static_cast<std::size_t>(axis)].phi(j, k); }
  /// Dense-mode eigenvector matrix (rows are grid points).
  const Eigen::MatrixXd& dense_phi() const noexcept { return dense_phi_; }

 private:
  Grid grid_;
  bool separable_ = true;
  std::vector<AxisEigen> axes_;
  Eigen::VectorXd dense_lambda_;
  Eigen::MatrixXd dense_phi_;
  std::vector<double> lambda_;
  double lambda_min_ = 0.0, lambda_max_ = 0.0;
};

/// In-place product of one axis of a flat tensor with an m x m matrix: out(.., i, ..) = sum_j M(i, j) in(.., j, ..).
void mode_product(std::vector<double>& data, const Grid& grid, int axis, const Eigen::MatrixXd& M);

/// Interpolated scalar symbol on [lo, hi], cubic in log(lambda), densified until the midpoint
/// error falls below rel_tol; falls back to direct evaluation when that fails.
class SymbolTable {
 public:
  SymbolTable(Symbol fn, double lo, double hi, double rel_tol = 1e-11, double abs_tol = 1e-14);
  double operator()(double lambda) const;
  std::size_t nodes() const noexcept { return values_.size(); }
  bool direct() const noexcept { return direct_; }

 private:
  Symbol fn_;
  double log_lo_ = 0.0, step_ = 1.0;
  std::vector<double> values_;
  bool direct_ = false;
};

}  // namespace schro
