#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace schro {

inline constexpr int kMaxDim = 4;

/// A point of R^n, n <= kMaxDim. Unused trailing coordinates are zero.
struct Point {
  std::array<double, kMaxDim> c{};

  double& operator[](int a) { return c[static_cast<std::size_t>(a)]; }
  double operator[](int a) const { return c[static_cast<std::size_t>(a)]; }
};

double distance(const Point& a, const Point& b, int dim);
double distance_sq(const Point& a, const Point& b, int dim);

/// Uniform tensor grid of m interior nodes per axis on the box [-L, L]^n.
///
/// Node j sits at -L + (j + 1) h with h = 2L / (m + 1); the walls at +-L carry
/// the Dirichlet condition and are not unknowns. Each node is the center of a
/// cell of volume h^n. Flat indices run with axis 0 slowest.
class Grid {
 public:
  Grid() = default;
  Grid(int dim, int m, double half_width);

  int dim() const noexcept { return dim_; }
  int m() const noexcept { return m_; }
  double half_width() const noexcept { return half_width_; }
  double h() const noexcept { return h_; }
  double cell_volume() const noexcept { return cell_volume_; }
  std::size_t size() const noexcept { return size_; }

  double coord(int j) const noexcept { return -half_width_ + (j + 1) * h_; }
  std::size_t stride(int axis) const noexcept { return strides_[static_cast<std::size_t>(axis)]; }

  std::array<int, kMaxDim> unflatten(std::size_t idx) const noexcept;
  std::size_t flatten(const std::array<int, kMaxDim>& ij) const noexcept;
  Point point(std::size_t idx) const noexcept;

  /// Nearest grid node to p (clamped into the grid).
  std::size_t nearest(const Point& p) const noexcept;

  /// Distance from p to the nearest wall of the box.
  double distance_to_boundary(const Point& p) const noexcept;

  bool contains(const Point& p) const noexcept;

  /// Flat indices of the cells whose centers lie in the closed ball B(center, r).
  std::vector<std::size_t> cells_in_ball(const Point& center, double r) const;

  /// Number of cells whose centers lie in B(center, r); avoids the allocation.
  std::size_t count_in_ball(const Point& center, double r) const;

  bool operator==(const Grid& other) const = default;

 private:
  int dim_ = 0;
  int m_ = 0;
  double half_width_ = 0.0;
  double h_ = 0.0;
  double cell_volume_ = 0.0;
  std::size_t size_ = 0;
  std::array<std::size_t, kMaxDim> strides_{};
};

/// Real values on a Grid.
struct GridFunction {
  Grid grid;
  std::vector<double> values;

  GridFunction() = default;
  explicit GridFunction(const Grid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
  GridFunction(const Grid& g, std::vector<double> v);

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

/// Discrete L^2 inner product h^n sum f g.
double inner(const GridFunction& f, const GridFunction& g);
double norm2(const GridFunction& f);
/// Discrete L^2 norm of f - g.
double distance2(const GridFunction& f, const GridFunction& g);
double max_abs(const GridFunction& f);

GridFunction operator+(const GridFunction& a, const GridFunction& b);
GridFunction operator-(const GridFunction& a, const GridFunction& b);
GridFunction operator*(double s, const GridFunction& a);

template <class Fn>
GridFunction sample(const Grid& g, Fn&& fn) {
  GridFunction out(g);
  for (std::size_t i = 0; i < g.size(); ++i) out.values[i] = fn(g.point(i));
  return out;
}

}  // namespace schro
