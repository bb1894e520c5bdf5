#include "schro/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "schro/errors.hpp"

namespace schro {

AxisEigen eigensolve_axis(const std::vector<double>& v, double h, int axis) {
  const int m = static_cast<int>(v.size());
  if (m < 8) throw ContractError("grid too coarse: eigensolve needs m >= 8 (got " + std::to_string(m) + ")");
  const double inv = 1.0 / (h * h);
  Eigen::VectorXd diag(m), sub(m - 1);
  for (int j = 0; j < m; ++j) diag(j) = 2.0 * inv + v[static_cast<std::size_t>(j)];
  sub.setConstant(-inv);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success)
    throw EigenSolverError("eigensolver did not converge on axis " + std::to_string(axis));

  AxisEigen out;
  out.lambda = es.eigenvalues();
  out.phi = es.eigenvectors() / std::sqrt(h);
  for (int k = 0; k < m; ++k) {
    auto col = out.phi.col(k);
    const double big = col.cwiseAbs().maxCoeff();
    for (int j = 0; j < m; ++j) {
      if (std::abs(col(j)) > 1e-3 * big) {
        if (col(j) < 0) col = -col;
        break;
      }
    }
  }
  return out;
}

void mode_product(std::vector<double>& data, const Grid& grid, int axis, const Eigen::MatrixXd& M) {
  const Eigen::Index m = grid.m();
  const Eigen::Index inner = static_cast<Eigen::Index>(grid.stride(axis));
  const Eigen::Index outer = static_cast<Eigen::Index>(data.size()) / (m * inner);
  if (inner == 1) {
    Eigen::Map<Eigen::MatrixXd> X(data.data(), m, outer);
    Eigen::MatrixXd Y = M * X;
    X = Y;
    return;
  }
  Eigen::MatrixXd Y(inner, m);
  const Eigen::MatrixXd Mt = M.transpose();
  for (Eigen::Index o = 0; o < outer; ++o) {
    Eigen::Map<Eigen::MatrixXd> X(data.data() + o * m * inner, inner, m);
    Y.noalias() = X * Mt;
    X = Y;
  }
}

SpectralModel SpectralModel::build(const Potential& V, std::size_t dense_cap) {
  SpectralModel s;
  s.grid_ = V.grid();
  const Grid& g = s.grid_;
  const double h = g.h();
  if (g.m() < 8) throw ContractError("grid too coarse: eigensolve needs m >= 8 (got " + std::to_string(g.m()) + ")");

  if (V.is_separable()) {
    s.separable_ = true;
    for (int a = 0; a < g.dim(); ++a) s.axes_.push_back(eigensolve_axis(V.axes()[static_cast<std::size_t>(a)].samples(), h, a));
    s.lambda_.resize(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
      const auto ij = g.unflatten(k);
      double lam = 0.0;
      for (int a = 0; a < g.dim(); ++a) lam += s.axes_[static_cast<std::size_t>(a)].lambda(ij[static_cast<std::size_t>(a)]);
      s.lambda_[k] = lam;
    }
  } else {
    if (g.size() > dense_cap) {
      std::ostringstream os;
      os << "dense cap exceeded: m^n = " << g.size() << " > " << dense_cap;
      throw ContractError(os.str());
    }
    s.separable_ = false;
    const Eigen::Index N = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
    const double inv = 1.0 / (h * h);
    for (Eigen::Index i = 0; i < N; ++i) {
      const auto ij = g.unflatten(static_cast<std::size_t>(i));
      A(i, i) = 2.0 * g.dim() * inv + V.value(static_cast<std::size_t>(i));
      for (int a = 0; a < g.dim(); ++a) {
        if (ij[static_cast<std::size_t>(a)] + 1 < g.m()) {
          const Eigen::Index j = i + static_cast<Eigen::Index>(g.stride(a));
          A(i, j) = A(j, i) = -inv;
        }
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) throw EigenSolverError("dense eigensolver did not converge");
    s.dense_lambda_ = es.eigenvalues();
    s.dense_phi_ = es.eigenvectors() / std::sqrt(g.cell_volume());
    s.lambda_.assign(s.dense_lambda_.data(), s.dense_lambda_.data() + N);
  }
  s.lambda_min_ = *std::min_element(s.lambda_.begin(), s.lambda_.end());
  s.lambda_max_ = *std::max_element(s.lambda_.begin(), s.lambda_.end());
  return s;
}

std::vector<double> SpectralModel::forward(const GridFunction& f) const {
  if (!(f.grid == grid_)) throw ContractError("grid function does not match the spectral model grid");
  if (!separable_) {
    Eigen::Map<const Eigen::VectorXd> x(f.values.data(), static_cast<Eigen::Index>(f.size()));
    Eigen::VectorXd c = grid_.cell_volume() * (dense_phi_.transpose() * x);
    return {c.data(), c.data() + c.size()};
  }
  std::vector<double> data = f.values;
  for (int a = 0; a < grid_.dim(); ++a) {
    const auto& ax = axes_[static_cast<std::size_t>(a)];
    mode_product(data, grid_, a, grid_.h() * ax.phi.transpose());
  }
  return data;
}

GridFunction SpectralModel::backward(const std::vector<double>& c) const {
  if (c.size() != grid_.size()) throw ContractError("coefficient vector has the wrong length");
  if (!separable_) {
    Eigen::Map<const Eigen::VectorXd> x(c.data(), static_cast<Eigen::Index>(c.size()));
    Eigen::VectorXd f = dense_phi_ * x;
    return GridFunction(grid_, std::vector<double>(f.data(), f.data() + f.size()));
  }
  std::vector<double> data = c;
  for (int a = 0; a < grid_.dim(); ++a) mode_product(data, grid_, a, axes_[static_cast<std::size_t>(a)].phi);
  return GridFunction(grid_, std::move(data));
}

GridFunction SpectralModel::apply_coefficients(const Symbol& phi, const std::vector<double>& c,
                                               const ApplyOptions& opt) const {
  std::vector<double> d(c.size());
  double total = 0.0, dropped = 0.0;
  std::vector<std::pair<double, double>> dropped_modes;
  for (std::size_t k = 0; k < c.size(); ++k) {
    total += c[k] * c[k];
    if (lambda_[k] > opt.cutoff) {
      dropped += c[k] * c[k];
      dropped_modes.emplace_back(lambda_[k], c[k] * c[k]);
      d[k] = 0.0;
    } else {
      d[k] = c[k] == 0.0 ? 0.0 : phi(lambda_[k]) * c[k];
    }
  }
  if (dropped > opt.residual_tol * opt.residual_tol * total) {
    // Smallest cutoff leaving an admissible residual.
    std::sort(dropped_modes.begin(), dropped_modes.end());
    double tail = dropped, need = opt.cutoff;
    for (const auto& [lam, e] : dropped_modes) {
      if (tail <= 0.25 * opt.residual_tol * opt.residual_tol * total) break;
      tail -= e;
      need = lam;
    }
    std::ostringstream os;
    os << "spectral cutoff residual " << std::sqrt(dropped / total) << " exceeds " << opt.residual_tol
       << "; required cutoff >= " << need;
    throw CutoffError(os.str(), need);
  }
  return backward(d);
}

GridFunction SpectralModel::apply(const Symbol& phi, const GridFunction& f, const ApplyOptions& opt) const {
  return apply_coefficients(phi, forward(f), opt);
}

Eigen::MatrixXd SpectralModel::axis_function_matrix(int axis, const Symbol& g) const {
  const auto& ax = axes_[static_cast<std::size_t>(axis)];
  Eigen::VectorXd w(ax.lambda.size());
  for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = g(ax.lambda(k));
  return grid_.h() * (ax.phi * w.asDiagonal() * ax.phi.transpose());
}

GridFunction SpectralModel::apply_axis_matrices(const std::vector<Eigen::MatrixXd>& mats, const GridFunction& f) const {
  if (!separable_) throw ContractError("axis matrices need a separable model");
  std::vector<double> data = f.values;
  for (int a = 0; a < grid_.dim(); ++a) mode_product(data, grid_, a, mats[static_cast<std::size_t>(a)]);
  return GridFunction(grid_, std::move(data));
}

GridFunction SpectralModel::heat(double t, const GridFunction& f) const {
  if (!(t >= 0.0)) throw ContractError("heat semigroup needs t >= 0");
  if (!separable_) return apply([t](double lam) { return std::exp(-t * lam); }, f);
  std::vector<Eigen::MatrixXd> mats;
  for (int a = 0; a < grid_.dim(); ++a) mats.push_back(axis_function_matrix(a, [t](double lam) { return std::exp(-t * lam); }));
  return apply_axis_matrices(mats, f);
}

double SpectralModel::heat_kernel(double t, std::size_t x, std::size_t y) const {
  if (!(t > 0.0)) throw ContractError("heat kernel needs t > 0");
  if (!separable_) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < dense_lambda_.size(); ++k)
      s += std::exp(-t * dense_lambda_(k)) * dense_phi_(static_cast<Eigen::Index>(x), k) * dense_phi_(static_cast<Eigen::Index>(y), k);
    return s;
  }
  const auto ix = grid_.unflatten(x), iy = grid_.unflatten(y);
  double prod = 1.0;
  for (int a = 0; a < grid_.dim(); ++a) {
    const auto& ax = axes_[static_cast<std::size_t>(a)];
    const int jx = ix[static_cast<std::size_t>(a)], jy = iy[static_cast<std::size_t>(a)];
    double s = 0.0;
    for (Eigen::Index k = 0; k < ax.lambda.size(); ++k) s += std::exp(-t * ax.lambda(k)) * ax.phi(jx, k) * ax.phi(jy, k);
    prod *= s;
  }
  return prod;
}

GridFunction SpectralModel::eigenfunction(std::size_t k) const {
  GridFunction out(grid_);
  if (!separable_) {
    for (std::size_t i = 0; i < grid_.size(); ++i) out.values[i] = dense_phi_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    return out;
  }
  const auto kk = grid_.unflatten(k);
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    const auto ij = grid_.unflatten(i);
    double v = 1.0;
    for (int a = 0; a < grid_.dim(); ++a)
      v *= axes_[static_cast<std::size_t>(a)].phi(ij[static_cast<std::size_t>(a)], kk[static_cast<std::size_t>(a)]);
    out.values[i] = v;
  }
  return out;
}

double SpectralModel::orthonormality_defect() const {
  double worst = 0.0;
  auto check = [&](const Eigen::MatrixXd& P, double w) {
    Eigen::MatrixXd G = w * (P.transpose() * P);
    G -= Eigen::MatrixXd::Identity(G.rows(), G.cols());
    worst = std::max(worst, G.cwiseAbs().maxCoeff());
  };
  if (separable_)
    for (const auto& ax : axes_) check(ax.phi, grid_.h());
  else
    check(dense_phi_, grid_.cell_volume());
  return worst;
}

SymbolTable::SymbolTable(Symbol fn, double lo, double hi, double rel_tol, double abs_tol) : fn_(std::move(fn)) {
  if (!(lo > 0.0) || !(hi >= lo)) throw ContractError("symbol table needs 0 < lo <= hi");
  log_lo_ = std::log(lo) - 1e-9;
  const double span = std::log(hi) + 1e-9 - log_lo_;
  for (int intervals = 64; intervals <= (1 << 16); intervals *= 2) {
    step_ = span / intervals;
    // Two extra nodes on each side for the 4-point stencil.
    values_.resize(static_cast<std::size_t>(intervals + 3));
    double vmax = 0.0;
    for (int k = 0; k < intervals + 3; ++k) {
      values_[static_cast<std::size_t>(k)] = fn_(std::exp(log_lo_ + (k - 1) * step_));
      vmax = std::max(vmax, std::abs(values_[static_cast<std::size_t>(k)]));
    }
    double err = 0.0;
    for (int k = 0; k < intervals; ++k) {
      const double lam = std::exp(log_lo_ + (k + 0.5) * step_);
      err = std::max(err, std::abs((*this)(lam) - fn_(lam)));
    }
    if (err <= rel_tol * vmax + abs_tol) return;
  }
  direct_ = true;
  values_.clear();
}

double SymbolTable::operator()(double lambda) const {
  if (direct_) return fn_(lambda);
  const double u = (std::log(lambda) - log_lo_) / step_;
  const int last = static_cast<int>(values_.size()) - 3;
  const int k = std::clamp(static_cast<int>(std::floor(u)), 0, last - 1);
  const double x = u - k;
  // Lagrange cubic through nodes k-1, k, k+1, k+2 (stored at offsets k, k+1, k+2, k+3).
  const double* p = values_.data() + k;
  const double w0 = -x * (x - 1) * (x - 2) / 6.0;
  const double w1 = (x + 1) * (x - 1) * (x - 2) / 2.0;
  const double w2 = -(x + 1) * x * (x - 2) / 2.0;
  const double w3 = (x + 1) * x * (x - 1) / 6.0;
  return w0 * p[0] + w1 * p[1] + w2 * p[2] + w3 * p[3];
}

}  // namespace schro
