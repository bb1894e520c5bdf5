#include "schro/grid.hpp"

#include <algorithm>
#include <limits>

#include "schro/errors.hpp"

namespace schro {

double distance_sq(const Point& a, const Point& b, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

double distance(const Point& a, const Point& b, int dim) { return std::sqrt(distance_sq(a, b, dim)); }

Grid::Grid(int dim, int m, double half_width) : dim_(dim), m_(m), half_width_(half_width) {
  if (dim < 1 || dim > kMaxDim) throw ContractError("dimension must be in 1.." + std::to_string(kMaxDim));
  if (m < 1) throw ContractError("grid needs at least one point per axis");
  if (!(half_width > 0.0) || !std::isfinite(half_width)) throw ContractError("box half-width must be positive");
  h_ = 2.0 * half_width / (m + 1);
  cell_volume_ = std::pow(h_, dim);
  size_ = 1;
  for (int a = dim - 1; a >= 0; --a) {
    strides_[static_cast<std::size_t>(a)] = size_;
    size_ *= static_cast<std::size_t>(m);
  }
}

std::array<int, kMaxDim> Grid::unflatten(std::size_t idx) const noexcept {
  std::array<int, kMaxDim> ij{};
  for (int a = dim_ - 1; a >= 0; --a) {
    ij[static_cast<std::size_t>(a)] = static_cast<int>(idx % static_cast<std::size_t>(m_));
    idx /= static_cast<std::size_t>(m_);
  }
  return ij;
}

std::size_t Grid::flatten(const std::array<int, kMaxDim>& ij) const noexcept {
  std::size_t idx = 0;
  for (int a = 0; a < dim_; ++a) idx = idx * static_cast<std::size_t>(m_) + static_cast<std::size_t>(ij[static_cast<std::size_t>(a)]);
  return idx;
}

Point Grid::point(std::size_t idx) const noexcept {
  const auto ij = unflatten(idx);
  Point p;
  for (int a = 0; a < dim_; ++a) p[a] = coord(ij[static_cast<std::size_t>(a)]);
  return p;
}

std::size_t Grid::nearest(const Point& p) const noexcept {
  std::array<int, kMaxDim> ij{};
  for (int a = 0; a < dim_; ++a) {
    const double j = std::round((p[a] + half_width_) / h_ - 1.0);
    ij[static_cast<std::size_t>(a)] = static_cast<int>(std::clamp(j, 0.0, static_cast<double>(m_ - 1)));
  }
  return flatten(ij);
}

double Grid::distance_to_boundary(const Point& p) const noexcept {
  double d = std::numeric_limits<double>::infinity();
  for (int a = 0; a < dim_; ++a) d = std::min(d, half_width_ - std::abs(p[a]));
  return d;
}

bool Grid::contains(const Point& p) const noexcept {
  for (int a = 0; a < dim_; ++a)
    if (std::abs(p[a]) > half_width_) return false;
  return true;
}

namespace {

// Visits every cell whose center is within distance r of c, axis by axis.
template <class Visit>
void for_each_in_ball(const Grid& g, const Point& c, double r, Visit&& visit) {
  const int n = g.dim();
  const double h = g.h();
  const double L = g.half_width();
  const int m = g.m();
  const double r2 = r * r * (1.0 + 1e-12);

  std::array<int, kMaxDim> ij{};
  std::array<double, kMaxDim + 1> rem{};
  rem[0] = r2;

  auto range = [&](int a, double budget, int& lo, int& hi) {
    const double w = std::sqrt(std::max(budget, 0.0));
    lo = std::max(0, static_cast<int>(std::ceil((c[a] - w + L) / h - 1.0 - 1e-9)));
    hi = std::min(m - 1, static_cast<int>(std::floor((c[a] + w + L) / h - 1.0 + 1e-9)));
  };

  // Iterative nested loop over the first n axes.
  std::array<int, kMaxDim> lo{}, hi{};
  int a = 0;
  range(0, rem[0], lo[0], hi[0]);
  ij[0] = lo[0] - 1;
  while (a >= 0) {
    const std::size_t ua = static_cast<std::size_t>(a);
    ++ij[ua];
    if (ij[ua] > hi[ua]) {
      --a;
      continue;
    }
    const double d = g.coord(ij[ua]) - c[a];
    const double left = rem[ua] - d * d;
    if (left < 0.0) continue;
    if (a == n - 1) {
      visit(g.flatten(ij));
      continue;
    }
    rem[ua + 1] = left;
    ++a;
    range(a, left, lo[static_cast<std::size_t>(a)], hi[static_cast<std::size_t>(a)]);
    ij[static_cast<std::size_t>(a)] = lo[static_cast<std::size_t>(a)] - 1;
  }
}

}  // namespace

std::vector<std::size_t> Grid::cells_in_ball(const Point& center, double r) const {
  std::vector<std::size_t> out;
  for_each_in_ball(*this, center, r, [&](std::size_t i) { out.push_back(i); });
  return out;
}

std::size_t Grid::count_in_ball(const Point& center, double r) const {
  std::size_t n = 0;
  for_each_in_ball(*this, center, r, [&](std::size_t) { ++n; });
  return n;
}

GridFunction::GridFunction(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
  if (values.size() != g.size()) throw ContractError("grid function length does not match grid size");
}

namespace {
void require_same(const GridFunction& f, const GridFunction& g) {
  if (!(f.grid == g.grid)) throw ContractError("grid functions live on different grids");
}
}  // namespace

double inner(const GridFunction& f, const GridFunction& g) {
  require_same(f, g);
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f.values[i] * g.values[i];
  return s * f.grid.cell_volume();
}

double norm2(const GridFunction& f) { return std::sqrt(inner(f, f)); }

double distance2(const GridFunction& f, const GridFunction& g) {
  require_same(f, g);
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double d = f.values[i] - g.values[i];
    s += d * d;
  }
  return std::sqrt(s * f.grid.cell_volume());
}

double max_abs(const GridFunction& f) {
  double m = 0.0;
  for (double v : f.values) m = std::max(m, std::abs(v));
  return m;
}

GridFunction operator+(const GridFunction& a, const GridFunction& b) {
  require_same(a, b);
  GridFunction out(a.grid);
  for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = a.values[i] + b.values[i];
  return out;
}

GridFunction operator-(const GridFunction& a, const GridFunction& b) {
  require_same(a, b);
  GridFunction out(a.grid);
  for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = a.values[i] - b.values[i];
  return out;
}

GridFunction operator*(double s, const GridFunction& a) {
  GridFunction out(a.grid);
  for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = s * a.values[i];
  return out;
}

}  // namespace schro
