#include "schro/potential.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "schro/errors.hpp"
#include "schro/quadrature.hpp"

namespace schro {

double unit_ball_volume(int k) {
  return std::pow(std::numbers::pi, 0.5 * k) / std::tgamma(0.5 * k + 1.0);
}

void check_reverse_holder_exponent(int dim, double q) {
  if (std::isnan(q) || !(q > 0.5 * dim)) {
    std::ostringstream os;
    os << "reverse Hölder exponent q = " << q << " must exceed n/2 = " << 0.5 * dim
       << " (standing assumption on V)";
    throw ContractError(os.str());
  }
}

AxisProfile::AxisProfile(std::vector<double> samples, double half_width, std::optional<std::vector<double>> poly)
    : samples_(std::move(samples)), poly_(std::move(poly)), half_width_(half_width) {
  const int m = static_cast<int>(samples_.size());
  if (m < 3) throw ContractError("axis profile needs at least 3 samples");
  h_ = 2.0 * half_width / (m + 1);

  const auto& p = samples_;
  knot_x_.resize(static_cast<std::size_t>(m + 2));
  knot_v_.resize(static_cast<std::size_t>(m + 2));
  knot_d_.resize(static_cast<std::size_t>(m + 2));
  for (int k = 0; k < m + 2; ++k) knot_x_[static_cast<std::size_t>(k)] = -half_width + k * h_;
  knot_v_.front() = 3.0 * p[0] - 3.0 * p[1] + p[2];
  knot_v_.back() = 3.0 * p[static_cast<std::size_t>(m - 1)] - 3.0 * p[static_cast<std::size_t>(m - 2)] +
                   p[static_cast<std::size_t>(m - 3)];
  for (int k = 1; k <= m; ++k) knot_v_[static_cast<std::size_t>(k)] = p[static_cast<std::size_t>(k - 1)];
  for (int k = 1; k <= m; ++k)
    knot_d_[static_cast<std::size_t>(k)] =
        (knot_v_[static_cast<std::size_t>(k + 1)] - knot_v_[static_cast<std::size_t>(k - 1)]) / (2.0 * h_);
  knot_d_.front() = (-3.0 * knot_v_[0] + 4.0 * knot_v_[1] - knot_v_[2]) / (2.0 * h_);
  const std::size_t e = knot_v_.size() - 1;
  knot_d_.back() = (3.0 * knot_v_[e] - 4.0 * knot_v_[e - 1] + knot_v_[e - 2]) / (2.0 * h_);

  // Degree 3 + 3 integrands: 4 Gauss points are exact.
  moments_.assign(static_cast<std::size_t>(m + 2), {0.0, 0.0, 0.0, 0.0});
  for (int seg = 0; seg <= m; ++seg) {
    std::array<double, 4> acc = moments_[static_cast<std::size_t>(seg)];
    const double a = knot_x_[static_cast<std::size_t>(seg)], b = knot_x_[static_cast<std::size_t>(seg + 1)];
    for (int k = 0; k < 4; ++k)
      acc[static_cast<std::size_t>(k)] +=
          gauss_integrate([&](double s) { return segment_eval(seg, s) * std::pow(s, k); }, a, b, 4);
    moments_[static_cast<std::size_t>(seg + 1)] = acc;
  }
}

double AxisProfile::eval_poly(double s) const {
  double v = 0.0;
  for (auto it = poly_->rbegin(); it != poly_->rend(); ++it) v = v * s + *it;
  return v;
}

int AxisProfile::segment_of(double s) const {
  const int last = static_cast<int>(knot_x_.size()) - 2;
  const int seg = static_cast<int>(std::floor((s + half_width_) / h_));
  return std::clamp(seg, 0, last);
}

double AxisProfile::segment_eval(int seg, double s) const {
  const std::size_t k = static_cast<std::size_t>(seg);
  const double t = (s - knot_x_[k]) / h_;
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
  const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  return h00 * knot_v_[k] + h10 * h_ * knot_d_[k] + h01 * knot_v_[k + 1] + h11 * h_ * knot_d_[k + 1];
}

double AxisProfile::eval(double s) const {
  if (poly_) return eval_poly(s);
  return segment_eval(segment_of(s), s);
}

double AxisProfile::ball_section(double c, double r, int n) const {
  const double omega = unit_ball_volume(n - 1);
  const double a = std::max(c - r, -half_width_);
  const double b = std::min(c + r, half_width_);
  if (!(b > a)) return 0.0;

  auto theta_of = [&](double s) { return std::asin(std::clamp((s - c) / r, -1.0, 1.0)); };
  auto theta_integrand = [&](double th) {
    return omega * std::pow(r * std::cos(th), n) * eval(c + r * std::sin(th));
  };

  if (poly_) {
    if (a > c - r || b < c + r) return gauss_integrate(theta_integrand, theta_of(a), theta_of(b), 48);
    // Taylor coefficients of v at c; odd powers integrate to zero against the even chord weight.
    const auto& p = *poly_;
    double total = 0.0;
    for (std::size_t k = 0; k < p.size(); k += 2) {
      double bk = 0.0, binom = 1.0;
      for (std::size_t j = k; j < p.size(); ++j) {
        bk += p[j] * binom * std::pow(c, static_cast<double>(j - k));
        binom = binom * static_cast<double>(j + 1) / static_cast<double>(j + 1 - k);
      }
      total += bk * std::pow(r, static_cast<double>(n + k)) * std::beta(0.5 * (k + 1), 0.5 * (n + 1));
    }
    return omega * total;
  }

  if (n % 2 == 1) {
    // The chord weight is a polynomial in s: expand it and use segment moments.
    std::array<double, 4> w{};
    if (n == 1) {
      w[0] = 1.0;
    } else {
      w[0] = omega * (r * r - c * c);
      w[1] = omega * 2.0 * c;
      w[2] = -omega;
    }
    auto weight = [&](double s) {
      return w[0] + s * (w[1] + s * w[2]);
    };
    auto direct = [&](double lo, double hi, int seg) {
      return gauss_integrate([&](double s) { return segment_eval(seg, s) * weight(s); }, lo, hi, 6);
    };
    const int sa = segment_of(a), sb = segment_of(b);
    if (sa == sb) return direct(a, b, sa);
    double total = direct(a, knot_x_[static_cast<std::size_t>(sa + 1)], sa);
    total += direct(knot_x_[static_cast<std::size_t>(sb)], b, sb);
    const auto& hi = moments_[static_cast<std::size_t>(sb)];
    const auto& lo = moments_[static_cast<std::size_t>(sa + 1)];
    for (int k = 0; k < 3; ++k)
      total += w[static_cast<std::size_t>(k)] * (hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)]);
    return total;
  }

  // Even dimension: the chord weight has a square root, integrate in theta split at the knots.
  std::vector<double> cuts{theta_of(a)};
  for (int k = segment_of(a) + 1; k <= segment_of(b); ++k) cuts.push_back(theta_of(knot_x_[static_cast<std::size_t>(k)]));
  cuts.push_back(theta_of(b));
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
    if (cuts[k + 1] > cuts[k]) total += gauss_integrate(theta_integrand, cuts[k], cuts[k + 1], 8);
  return total;
}

namespace {

void require_nonnegative(const std::vector<double>& v, const std::string& where) {
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (!std::isfinite(v[j]) || v[j] < 0.0) {
      std::ostringstream os;
      os << "potential must be nonnegative: " << where << " index " << j << " has value " << v[j];
      throw ContractError(os.str());
    }
  }
}

}  // namespace

Potential Potential::separable(const Grid& grid, std::vector<AxisProfile> axes, double q, std::string label) {
  if (static_cast<int>(axes.size()) != grid.dim())
    throw ContractError("separable potential needs exactly one factor per axis");
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (static_cast<int>(axes[i].samples().size()) != grid.m())
      throw ContractError("axis factor " + std::to_string(i) + " must have m samples");
    require_nonnegative(axes[i].samples(), "axis " + std::to_string(i));
  }
  check_reverse_holder_exponent(grid.dim(), q);
  Potential p;
  p.grid_ = grid;
  p.mode_ = PotentialMode::Separable;
  p.axes_ = std::move(axes);
  p.q_ = q;
  p.label_ = std::move(label);
  return p;
}

Potential Potential::dense(const Grid& grid, std::vector<double> values, double q, std::string label,
                           std::size_t dense_cap) {
  if (grid.size() > dense_cap) {
    std::ostringstream os;
    os << "dense cap exceeded: m^n = " << grid.size() << " > " << dense_cap;
    throw ContractError(os.str());
  }
  if (values.size() != grid.size()) throw ContractError("dense potential must have m^n samples");
  require_nonnegative(values, "sample");
  check_reverse_holder_exponent(grid.dim(), q);
  Potential p;
  p.grid_ = grid;
  p.mode_ = PotentialMode::Dense;
  p.dense_ = std::move(values);
  p.q_ = q;
  p.label_ = std::move(label);
  return p;
}

double Potential::delta0() const noexcept { return std::isinf(q_) ? 2.0 : 2.0 - grid_.dim() / q_; }

double Potential::value(std::size_t idx) const {
  if (mode_ == PotentialMode::Dense) return dense_[idx];
  const auto ij = grid_.unflatten(idx);
  double v = 0.0;
  for (int a = 0; a < grid_.dim(); ++a)
    v += axes_[static_cast<std::size_t>(a)].samples()[static_cast<std::size_t>(ij[static_cast<std::size_t>(a)])];
  return v;
}

double Potential::value_at(const Point& p) const {
  if (mode_ == PotentialMode::Dense) return dense_[grid_.nearest(p)];
  double v = 0.0;
  for (int a = 0; a < grid_.dim(); ++a) v += axes_[static_cast<std::size_t>(a)].eval(p[a]);
  return v;
}

GridFunction Potential::samples() const {
  GridFunction out(grid_);
  for (std::size_t i = 0; i < grid_.size(); ++i) out.values[i] = value(i);
  return out;
}

double Potential::ball_integral(const Point& c, double r) const {
  if (mode_ == PotentialMode::Separable && r <= grid_.distance_to_boundary(c) * (1.0 + 1e-9)) {
    double s = 0.0;
    for (int a = 0; a < grid_.dim(); ++a) s += axes_[static_cast<std::size_t>(a)].ball_section(c[a], r, grid_.dim());
    return s;
  }
  double s = 0.0;
  for (std::size_t i : grid_.cells_in_ball(c, r)) s += value(i);
  return s * grid_.cell_volume();
}

bool Potential::is_zero() const {
  if (mode_ == PotentialMode::Dense) return std::all_of(dense_.begin(), dense_.end(), [](double v) { return v == 0.0; });
  for (const auto& ax : axes_)
    if (std::any_of(ax.samples().begin(), ax.samples().end(), [](double v) { return v != 0.0; })) return false;
  return true;
}

Potential build_preset(const Grid& grid, const PresetSpec& spec) {
  const int n = grid.dim();
  std::vector<double> poly;
  if (spec.name == "constant") {
    if (!(spec.constant > 0.0)) throw ContractError("constant preset needs c > 0");
    poly = {spec.constant / n};
  } else if (spec.name == "zero") {
    poly = {0.0};
  } else if (spec.name == "harmonic") {
    poly = {0.0, 0.0, 1.0};
  } else if (spec.name == "polynomial") {
    if (spec.coeffs.empty()) throw ContractError("polynomial preset needs coefficients");
    poly = spec.coeffs;
  } else {
    throw ContractError("unknown potential preset '" + spec.name + "'");
  }
  std::vector<AxisProfile> axes;
  for (int a = 0; a < n; ++a) {
    std::vector<double> s(static_cast<std::size_t>(grid.m()));
    for (int j = 0; j < grid.m(); ++j) {
      double v = 0.0;
      for (auto it = poly.rbegin(); it != poly.rend(); ++it) v = v * grid.coord(j) + *it;
      s[static_cast<std::size_t>(j)] = v;
    }
    axes.emplace_back(std::move(s), grid.half_width(), poly);
  }
  std::string label = spec.name;
  if (spec.name == "constant") label += " " + std::to_string(spec.constant);
  return Potential::separable(grid, std::move(axes), spec.q, label);
}

Potential build_from_axis_samples(const Grid& grid, const std::vector<std::vector<double>>& axes, double q) {
  std::vector<AxisProfile> prof;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    require_nonnegative(axes[i], "axis " + std::to_string(i));
    if (static_cast<int>(axes[i].size()) != grid.m())
      throw ContractError("axis factor " + std::to_string(i) + " must have m samples");
    prof.emplace_back(axes[i], grid.half_width());
  }
  return Potential::separable(grid, std::move(prof), q, "samples");
}

}  // namespace schro
