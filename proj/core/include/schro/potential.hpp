#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "schro/grid.hpp"

namespace schro {

inline constexpr double kInfiniteQ = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kDefaultDenseCap = 4096;

/// One separable factor v_i on [-L, L]: grid samples plus, for presets, the exact polynomial.
///
/// Between nodes the profile is a C^1 cubic Hermite interpolant with centered tangents; the wall
/// values and end tangents come from the quadratic through the first three nodes, so quadratics
/// are reproduced exactly.
class AxisProfile {
 public:
  AxisProfile() = default;
  AxisProfile(std::vector<double> samples, double half_width,
              std::optional<std::vector<double>> poly = std::nullopt);

  const std::vector<double>& samples() const noexcept { return samples_; }
  bool is_polynomial() const noexcept { return poly_.has_value(); }
  double eval(double s) const;

  /// Integral of v(s) * omega_{n-1} * (r^2 - (s - c)^2)^{(n-1)/2} over the chord |s - c| <= r,
  /// i.e. the contribution of this axis to the integral of V over an n-ball.
  double ball_section(double c, double r, int n) const;

 private:
  double eval_poly(double s) const;
  int segment_of(double s) const;
  double segment_eval(int seg, double s) const;

  std::vector<double> samples_;
  std::optional<std::vector<double>> poly_;
  double half_width_ = 0.0;
  double h_ = 0.0;
  // Knots s_{-1} = -L, s_0..s_{m-1}, s_m = L with values and tangents.
  std::vector<double> knot_x_, knot_v_, knot_d_;
  // Prefix sums of the segment moments of v(s) s^k, k < 4.
  std::vector<std::array<double, 4>> moments_;
};

enum class PotentialMode { Separable, Dense };

/// Nonnegative potential V on the box grid with its reverse Hölder exponent.
class Potential {
 public:
  static Potential separable(const Grid& grid, std::vector<AxisProfile> axes, double q, std::string label = "");
  static Potential dense(const Grid& grid, std::vector<double> values, double q, std::string label = "",
                         std::size_t dense_cap = kDefaultDenseCap);

  const Grid& grid() const noexcept { return grid_; }
  PotentialMode mode() const noexcept { return mode_; }
  bool is_separable() const noexcept { return mode_ == PotentialMode::Separable; }
  double q() const noexcept { return q_; }
  const std::string& label() const noexcept { return label_; }
  const std::vector<AxisProfile>& axes() const noexcept { return axes_; }

  /// Smoothness budget 2 - n/q; 2 for the infinite exponent.
  double delta0() const noexcept;

  double value(std::size_t idx) const;
  /// Continuous evaluation (separable mode); dense mode returns the nearest sample.
  double value_at(const Point& p) const;
  GridFunction samples() const;

  /// Integral of V over B(c, r). Separable balls inside the box use per-axis chord integrals
  /// of the interpolated factors; otherwise cell-center inclusion quadrature.
  double ball_integral(const Point& c, double r) const;

  /// True when V vanishes identically.
  bool is_zero() const;

 private:
  Grid grid_;
  PotentialMode mode_ = PotentialMode::Separable;
  std::vector<AxisProfile> axes_;
  std::vector<double> dense_;
  double q_ = kInfiniteQ;
  std::string label_;
};

struct PresetSpec {
  std::string name;            // "constant", "harmonic", "polynomial", "zero"
  double constant = 1.0;       // for "constant"
  std::vector<double> coeffs;  // for "polynomial": per-axis v(s) = sum_k coeffs[k] s^k
  double q = kInfiniteQ;
};

/// Builds a separable preset potential. "constant c" splits c evenly over the axes.
Potential build_preset(const Grid& grid, const PresetSpec& spec);

/// Separable potential from per-axis samples.
Potential build_from_axis_samples(const Grid& grid, const std::vector<std::vector<double>>& axes, double q);

/// Rejects q <= n/2 (and non-positive or NaN q).
void check_reverse_holder_exponent(int dim, double q);

double unit_ball_volume(int k);

}  // namespace schro
