#include "schro/bmo.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "schro/errors.hpp"

namespace schro {

EnsemblePolicy EnsemblePolicy::doubled() const {
  EnsemblePolicy p = *this;
  p.centers_per_axis = 2 * centers_per_axis - 1;
  p.radii_per_decade = 2 * radii_per_decade;
  return p;
}

std::size_t BallEnsemble::count(BallClass c) const {
  return static_cast<std::size_t>(std::count_if(balls.begin(), balls.end(), [c](const BallSpec& b) { return b.cls == c; }));
}

namespace {

bool fits(const Grid& g, const Point& c, double s, double margin) {
  return g.distance_to_boundary(c) >= s + margin - 1e-12;
}

BallSpec make_ball(const RhoField& rho, std::size_t idx, double s, double margin) {
  const Grid& g = rho.grid();
  BallSpec b;
  b.center_index = idx;
  b.center = g.point(idx);
  b.radius = s;
  const RhoResult r = rho.result(idx);
  b.rho = r.rho;
  b.rho_capped = r.capped;
  // A capped rho only bounds the true value from below; such centers see every box ball as sub-critical.
  b.cls = r.capped ? (s <= 0.5 * r.rho ? BallClass::SubCritical : BallClass::Intermediate) : classify_ball(s, r.rho);
  b.margin_ok = fits(g, b.center, s, margin);
  return b;
}

}  // namespace

BallEnsemble ball_ensemble(const RhoField& rho, const EnsemblePolicy& policy) {
  const Grid& g = rho.grid();
  const int n = g.dim();
  if (policy.radii_per_decade < 4) throw ContractError("ensemble policy needs at least 4 radii per decade");
  if (policy.centers_per_axis < 5) throw ContractError("ensemble policy needs at least 5 centers per axis");
  const double r_lo = policy.r_min_cells * g.h();
  const double r_cap = policy.r_max > 0.0 ? policy.r_max : g.half_width() - policy.margin;
  if (!(r_cap > 2.0 * g.h())) throw ContractError("box too small: ensemble radius cap below 2h");

  // Centers: nested lattice, snapped to nodes and deduplicated.
  const int c = policy.centers_per_axis;
  const double span = policy.center_span * g.half_width();
  std::vector<std::size_t> centers;
  std::vector<int> digit(static_cast<std::size_t>(n), 0);
  for (;;) {
    Point p;
    for (int a = 0; a < n; ++a) p[a] = -span + 2.0 * span * digit[static_cast<std::size_t>(a)] / (c - 1);
    centers.push_back(g.nearest(p));
    int a = n - 1;
    while (a >= 0 && ++digit[static_cast<std::size_t>(a)] == c) digit[static_cast<std::size_t>(a--)] = 0;
    if (a < 0) break;
  }
  std::sort(centers.begin(), centers.end());
  centers.erase(std::unique(centers.begin(), centers.end()), centers.end());

  std::vector<double> radii;
  if (r_cap > r_lo) {
    const int K = static_cast<int>(std::ceil(std::log10(r_cap / r_lo) * policy.radii_per_decade));
    for (int k = 0; k <= K; ++k) radii.push_back(r_lo * std::pow(r_cap / r_lo, K == 0 ? 0.0 : static_cast<double>(k) / K));
  } else {
    radii.push_back(r_cap);
  }

  BallEnsemble ens;
  ens.policy = policy;
  add_balls(ens, rho, centers, radii);
  if (policy.rho_relative) {
    // Radii tied to each center's rho: rho/2 downwards at the same density, plus rho and 2 rho.
    for (std::size_t idx : centers) {
      const double r0 = rho.at(idx);
      std::vector<double> rel = {r0, 2.0 * r0};
      for (double s = 0.5 * r0; s >= r_lo; s *= std::pow(10.0, -1.0 / policy.radii_per_decade)) rel.push_back(s);
      add_balls(ens, rho, std::span<const std::size_t>(&idx, 1), rel);
    }
  }
  if (ens.balls.empty()) throw ContractError("box too small: no ball of the ensemble fits inside the margin");
  return ens;
}

void add_balls(BallEnsemble& ens, const RhoField& rho, std::span<const std::size_t> centers,
               std::span<const double> radii) {
  const Grid& g = rho.grid();
  for (std::size_t idx : centers)
    for (double s : radii) {
      if (!fits(g, g.point(idx), s, ens.policy.margin) || s <= 2.0 * g.h()) continue;
      ens.balls.push_back(make_ball(rho, idx, s, ens.policy.margin));
    }
}

double volume_weight(int n, double s, double alpha) {
  if (alpha == 0.0) return 1.0;
  return std::pow(unit_ball_volume(n) * std::pow(s, n), -alpha / n);
}

namespace {

struct BallCells {
  std::vector<std::size_t> idx;
};

BallCells cells_of(const Grid& g, const BallSpec& B) {
  BallCells c{g.cells_in_ball(B.center, B.radius)};
  if (c.idx.size() < 8) throw ContractError("ball below resolution: fewer than 8 cells");
  return c;
}

// Mean anchored at the first value to limit cancellation.
double mean_of(const GridFunction& f, const std::vector<std::size_t>& idx) {
  const double a = f.values[idx.front()];
  double acc = 0.0;
  for (std::size_t i : idx) acc += f.values[i] - a;
  return a + acc / static_cast<double>(idx.size());
}

double lp_mean(const GridFunction& f, const std::vector<std::size_t>& idx, double shift, double p) {
  double acc = 0.0;
  for (std::size_t i : idx) {
    const double d = std::abs(f.values[i] - shift);
    acc += p == 1.0 ? d : std::pow(d, p);
  }
  acc /= static_cast<double>(idx.size());
  return p == 1.0 ? acc : std::pow(acc, 1.0 / p);
}

}  // namespace

double ball_mean(const GridFunction& f, const BallSpec& B) { return mean_of(f, cells_of(f.grid, B).idx); }

double mean_oscillation(const GridFunction& f, const BallSpec& B, double p) {
  if (!(p >= 1.0)) throw ContractError("oscillation exponent p must be >= 1");
  const auto c = cells_of(f.grid, B);
  return lp_mean(f, c.idx, mean_of(f, c.idx), p);
}

OscillationReport bmo_alpha_norm(const GridFunction& f, double alpha, const BallEnsemble& ens, const NormOptions& opt) {
  if (!(alpha >= 0.0)) throw ContractError("alpha must be nonnegative");
  if (alpha > 1.0) throw ContractError("alpha > 1 rejected: BMO^alpha_L then only contains constants");
  if (ens.balls.empty()) throw ContractError("empty ball ensemble");
  const int n = f.grid.dim();
  OscillationReport rep;
  rep.alpha = alpha;
  rep.p = opt.p;
  bool any_critical = false;
  for (std::size_t b = 0; b < ens.balls.size(); ++b) {
    const BallSpec& B = ens.balls[b];
    if (!B.margin_ok) continue;
    const auto c = cells_of(f.grid, B);
    OscillationRow row;
    row.ball = b;
    row.mean = mean_of(f, c.idx);
    row.oscillation = lp_mean(f, c.idx, row.mean, opt.p);
    const double w = volume_weight(n, B.radius, alpha);
    row.weighted_osc = w * row.oscillation;
    row.mean_abs = lp_mean(f, c.idx, 0.0, opt.p);
    row.in_osc = !opt.osc_below_rho_only || B.rho_capped || B.radius < B.rho;
    if (row.in_osc) rep.sup_oscillation = std::max(rep.sup_oscillation, row.weighted_osc);
    if (B.cls == BallClass::Critical) {
      any_critical = true;
      row.weighted_mean = w * row.mean_abs;
      rep.sup_mean = std::max(rep.sup_mean, row.weighted_mean);
    }
    rep.rows.push_back(row);
  }
  rep.mean_condition_dropped = !any_critical;
  rep.norm = std::max(rep.sup_oscillation, rep.sup_mean);
  return rep;
}

GridFunction test_function_g(const Grid& g, const Point& x0, double s, double rho0) {
  if (!(s > 0.0) || s > rho0) throw ContractError("test function needs 0 < s <= rho(x0)");
  GridFunction out(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = distance(g.point(i), x0, g.dim());
    if (r <= s)
      out.values[i] = std::log(rho0 / s);
    else if (r <= rho0)
      out.values[i] = std::log(rho0 / r);
  }
  return out;
}

GridFunction test_function_f(const Grid& g, const Point& x0, double s, double alpha, double rho0) {
  if (!(s > 0.0) || s > rho0) throw ContractError("test function needs 0 < s <= rho(x0)");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("test function needs 0 < alpha <= 1");
  GridFunction out(g);
  const double top = std::pow(rho0, alpha);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = distance(g.point(i), x0, g.dim());
    if (r <= rho0) out.values[i] = top - std::pow(std::max(s, r), alpha);
  }
  return out;
}

VerificationReport mean_value_bound_check(const GridFunction& f, const BallEnsemble& ens, double alpha, double norm) {
  VerificationReport rep;
  rep.name = "MEAN_VALUE_BOUND";
  rep.header = "ratio |f_B| / ((1 + log(rho/r)) norm) for alpha = 0, |f_B| / (norm rho^alpha) otherwise; balls with r < rho";
  rep.key_columns = {"ball", "radius", "rho"};
  if (!(norm > 0.0)) {
    rep.degenerate = true;
    return rep;
  }
  for (std::size_t b = 0; b < ens.balls.size(); ++b) {
    const BallSpec& B = ens.balls[b];
    if (!B.margin_ok || !(B.rho_capped || B.radius < B.rho)) continue;
    const double fb = std::abs(ball_mean(f, B));
    const double bound = alpha == 0.0 ? (1.0 + std::log(B.rho / B.radius)) * norm : norm * std::pow(B.rho, alpha);
    rep.add({static_cast<double>(b), B.radius, B.rho}, fb, bound);
  }
  return rep;
}

CampanatoRow campanato_table(const GridFunction& f, const RhoField& rho, double alpha, double norm, std::size_t pairs,
                             std::uint64_t seed) {
  const Grid& g = f.grid;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
  CampanatoRow row;
  row.norm = norm;
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t x = pick(rng), y = pick(rng);
    if (x == y) continue;
    const double d = distance(g.point(x), g.point(y), g.dim());
    row.holder = std::max(row.holder, std::abs(f.values[x] - f.values[y]) / std::pow(d, alpha));
    row.weighted_sup = std::max(row.weighted_sup, std::abs(f.values[x]) / std::pow(rho.at(x), alpha));
  }
  const double denom = row.holder + row.weighted_sup;
  row.ratio = denom > 0.0 ? norm / denom : 0.0;
  return row;
}

}  // namespace schro
