#include "schro/t1.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "schro/errors.hpp"

namespace schro {

const double* T1Field::slice_at(std::size_t cell) const {
  const auto it = std::lower_bound(slice_cells.begin(), slice_cells.end(), cell);
  if (it == slice_cells.end() || *it != cell) return nullptr;
  return slices.data() + static_cast<std::size_t>(it - slice_cells.begin()) * K;
}

double T1Field::norm_of(const double* v) const {
  if (!vector) return std::abs(v[0]);
  if (sup_norm) {
    double m = 0.0;
    for (std::size_t k = 0; k < K; ++k) m = std::max(m, std::abs(v[k]));
    return m;
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < K; ++k) acc += weights[k] * v[k] * v[k];
  return std::sqrt(acc);
}

std::vector<std::size_t> subcritical_cells(const BallEnsemble& ens, const Grid& g) {
  std::vector<std::size_t> out;
  for (const auto& B : ens.balls) {
    if (!B.margin_ok || B.cls != BallClass::SubCritical) continue;
    const auto c = g.cells_in_ball(B.center, B.radius);
    out.insert(out.end(), c.begin(), c.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

GridFunction indicator(const Grid& g, double shrink) {
  GridFunction one(g);
  for (std::size_t i = 0; i < g.size(); ++i) one.values[i] = g.distance_to_boundary(g.point(i)) >= shrink ? 1.0 : 0.0;
  return one;
}

}  // namespace

T1Field t1_field(const Operator& op, const T1Options& opt, std::span<const std::size_t> needed) {
  const SpectralModel& M = op.model();
  const Grid& g = M.grid();
  T1Field t;
  t.descriptor = op.descriptor();
  t.vector = t.descriptor.vector_valued();
  t.sup_norm = t.descriptor.uses_sup_norm();
  t.margin = opt.margin;
  const GridFunction one = indicator(g, 0.0);
  if (!t.vector) {
    t.scalar = op.apply(one);
    if (needed.empty()) {
      t.slice_cells.resize(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) t.slice_cells[i] = i;
    } else {
      t.slice_cells.assign(needed.begin(), needed.end());
    }
    std::sort(t.slice_cells.begin(), t.slice_cells.end());
    for (std::size_t c : t.slice_cells) t.slices.push_back(t.scalar.values[c]);
  } else {
    t.K = op.slice_count();
    if (!t.sup_norm) t.weights = op.tgrid()->w;
    t.slice_cells.assign(needed.begin(), needed.end());
    std::sort(t.slice_cells.begin(), t.slice_cells.end());
    t.slices.assign(t.slice_cells.size() * t.K, 0.0);
    t.scalar = GridFunction(g);
    op.for_each_slice(one, [&](std::size_t k, const GridFunction& s) {
      for (std::size_t r = 0; r < t.slice_cells.size(); ++r) t.slices[r * t.K + k] = s.values[t.slice_cells[r]];
      if (t.sup_norm) {
        for (std::size_t i = 0; i < s.size(); ++i) t.scalar.values[i] = std::max(t.scalar.values[i], std::abs(s.values[i]));
      } else {
        const double w = t.weights[k];
        for (std::size_t i = 0; i < s.size(); ++i) t.scalar.values[i] += w * s.values[i] * s.values[i];
      }
    });
    if (!t.sup_norm)
      for (double& v : t.scalar.values) v = std::sqrt(v);
  }

  // Reporting region: the needed cells, or everything at least two margins from the wall.
  std::vector<std::size_t> region(needed.begin(), needed.end());
  if (region.empty())
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g.distance_to_boundary(g.point(i)) >= 2.0 * opt.margin) region.push_back(i);
  double dmin = g.half_width();
  for (std::size_t i : region) dmin = std::min(dmin, g.distance_to_boundary(g.point(i)));
  t.truncation_radius = dmin;

  if (opt.check_margin && !region.empty()) {
    const double shrink = std::round(opt.margin / g.h()) * g.h();
    const GridFunction ones = indicator(g, shrink - 0.5 * g.h());
    const GridFunction alt = op.apply(ones);
    double scale = 0.0, diff = 0.0;
    for (std::size_t i : region) {
      scale = std::max(scale, std::abs(t.scalar.values[i]));
      diff = std::max(diff, std::abs(alt.values[i] - t.scalar.values[i]));
    }
    t.margin_sensitivity = scale > 1e-9 ? diff / scale : (diff > 1e-9 ? 1.0 : 0.0);
    t.truncation_dominated = t.margin_sensitivity > opt.sensitivity_threshold;
  }
  return t;
}

T1Field t1_from_function(const GridFunction& f) {
  T1Field t;
  t.scalar = f;
  t.slice_cells.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) t.slice_cells[i] = i;
  t.slices = f.values;
  t.truncation_radius = f.grid.half_width();
  return t;
}

namespace {

// |B|^{-gamma/n} times the mean over cells of the Banach norm of T1 - (T1)_B.
double weighted_oscillation(const T1Field& t, const Grid& g, const BallSpec& B, double gamma) {
  const auto cells = g.cells_in_ball(B.center, B.radius);
  if (cells.size() < 8) throw ContractError("ball below resolution: fewer than 8 cells");
  const std::size_t K = t.K;
  std::vector<const double*> rows;
  rows.reserve(cells.size());
  for (std::size_t c : cells) {
    const double* r = t.slice_at(c);
    if (!r) throw ContractError("criterion ball touches a cell without stored T1 slices");
    rows.push_back(r);
  }
  std::vector<double> mean(K, 0.0), diff(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double a = rows.front()[k];
    double acc = 0.0;
    for (const double* r : rows) acc += r[k] - a;
    mean[k] = a + acc / static_cast<double>(rows.size());
  }
  double acc = 0.0;
  for (const double* r : rows) {
    for (std::size_t k = 0; k < K; ++k) diff[k] = r[k] - mean[k];
    acc += t.norm_of(diff.data());
  }
  return volume_weight(g.dim(), B.radius, gamma) * acc / static_cast<double>(rows.size());
}

CriterionReport criterion(const T1Field& t, double alpha, double gamma, const BallEnsemble& ens, bool log_weight) {
  const Grid& g = t.scalar.grid;
  CriterionReport rep;
  rep.weight_kind = log_weight ? "log" : "alpha";
  rep.alpha = alpha;
  rep.gamma = gamma;
  rep.truncation_dominated = t.truncation_dominated;
  for (std::size_t b = 0; b < ens.balls.size(); ++b) {
    const BallSpec& B = ens.balls[b];
    if (!B.margin_ok) continue;
    if (B.cls != BallClass::SubCritical) {
      if (B.cls == BallClass::Intermediate) ++rep.excluded_intermediate;
      continue;
    }
    CriterionRow row;
    row.ball = b;
    row.s = B.radius;
    row.rho = B.rho;
    row.weight = log_weight ? std::log(B.rho / B.radius) : std::pow(B.rho / B.radius, alpha);
    row.oscillation = weighted_oscillation(t, g, B, gamma);
    row.quantity = row.weight * row.oscillation;
    if (row.quantity > rep.supremum || rep.argmax < 0) {
      rep.supremum = std::max(rep.supremum, row.quantity);
      rep.argmax = static_cast<std::ptrdiff_t>(rep.rows.size());
    }
    rep.rows.push_back(row);
  }
  if (rep.rows.empty()) throw ContractError("no sub-critical ball in the ensemble");
  return rep;
}

}  // namespace

CriterionReport criterion_alpha(const T1Field& t1, double alpha, double gamma, const BallEnsemble& ens) {
  if (!(alpha >= 0.0) || !(gamma >= 0.0) || !(alpha + gamma < 1.0))
    throw ContractError("criterion needs alpha, gamma >= 0 with alpha + gamma < 1");
  return criterion(t1, alpha, gamma, ens, false);
}

CriterionReport criterion_log(const T1Field& t1, double gamma, const BallEnsemble& ens) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("log criterion needs 0 <= gamma < 1");
  return criterion(t1, 0.0, gamma, ens, true);
}

VerificationReport mean_bound_gamma_check(const T1Field& t1, double gamma, const RhoField& rho,
                                          std::span<const std::size_t> centers) {
  const Grid& g = rho.grid();
  VerificationReport rep;
  rep.name = "MEAN_BOUND_GAMMA";
  rep.header = "|B|^{-(1+gamma/n)} int_B |T1| on B = B(x, rho(x)); bound 1";
  rep.key_columns = {"center", "rho"};
  for (std::size_t c : centers) {
    const double r = rho.at(c);
    const Point x = g.point(c);
    if (g.distance_to_boundary(x) < r) {
      ++rep.excluded_constraint;
      continue;
    }
    const auto cells = g.cells_in_ball(x, r);
    double acc = 0.0;
    for (std::size_t i : cells) acc += std::abs(t1.scalar.values[i]);
    const double q = volume_weight(g.dim(), r, gamma) * acc / static_cast<double>(cells.size());
    rep.add({static_cast<double>(c), r}, q, 1.0);
  }
  rep.truncation_dominated = t1.truncation_dominated;
  return rep;
}

TestBattery make_battery(const RhoField& rho, const SpectralModel* model, double alpha, int size, std::uint64_t seed) {
  const Grid& g = rho.grid();
  TestBattery bat;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  // Extremal profiles at random centers, s / rho log-uniform in [0.05, 1].
  for (int k = 0; k < 2 * size; ++k) {
    Point p;
    for (int a = 0; a < g.dim(); ++a) p[a] = u(rng) * g.half_width();
    const std::size_t c = g.nearest(p);
    const double r0 = rho.at(c);
    const double s = r0 * std::pow(0.05, std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    if (alpha == 0.0)
      bat.members.push_back(test_function_g(g, g.point(c), s, r0));
    else
      bat.members.push_back(test_function_f(g, g.point(c), s, alpha, r0));
    bat.labels.push_back(alpha == 0.0 ? "g" : "f");
  }
  if (model) {
    // Lowest coefficient slots in eigenvalue order.
    const auto& lam = model->eigenvalues();
    std::vector<std::size_t> order(lam.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t take = std::min(order.size(), static_cast<std::size_t>(size));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) { return lam[a] < lam[b]; });
    for (std::size_t k = 0; k < take; ++k) {
      bat.members.push_back(model->eigenfunction(order[k]));
      bat.labels.push_back("eigen");
    }
  }
  std::normal_distribution<double> amp(0.0, 1.0);
  for (int k = 0; k < size; ++k) {
    GridFunction f(g);
    for (int b = 0; b < 4; ++b) {
      Point c;
      for (int a = 0; a < g.dim(); ++a) c[a] = u(rng) * g.half_width();
      const double A = amp(rng), w = 0.15 * g.half_width() * (1.0 + std::uniform_real_distribution<double>(0.0, 1.0)(rng));
      for (std::size_t i = 0; i < g.size(); ++i) f.values[i] += A * std::exp(-distance_sq(g.point(i), c, g.dim()) / (w * w));
    }
    bat.members.push_back(std::move(f));
    bat.labels.push_back("random");
  }
  return bat;
}

MultiplierReport multiplier_criterion(const GridFunction& psi, double alpha, const BallEnsemble& ens,
                                      const TestBattery& battery) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ContractError("multiplier criterion needs 0 <= alpha < 1");
  const Grid& g = psi.grid;
  MultiplierReport rep;
  std::vector<char> region(g.size(), 0);
  for (const auto& B : ens.balls)
    if (B.margin_ok)
      for (std::size_t i : g.cells_in_ball(B.center, B.radius)) region[i] = 1;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (region[i]) rep.sup_norm = std::max(rep.sup_norm, std::abs(psi.values[i]));
  const T1Field t = t1_from_function(psi);
  const auto crit = alpha == 0.0 ? criterion_log(t, 0.0, ens) : criterion_alpha(t, alpha, 0.0, ens);
  rep.weighted_oscillation = crit.supremum;
  for (const auto& f : battery.members) {
    ++rep.battery;
    const double nf = bmo_alpha_norm(f, alpha, ens).norm;
    if (!(nf > 0.0)) {
      ++rep.skipped;
      continue;
    }
    GridFunction fp(g);
    for (std::size_t i = 0; i < g.size(); ++i) fp.values[i] = f.values[i] * psi.values[i];
    rep.empirical_norm = std::max(rep.empirical_norm, bmo_alpha_norm(fp, alpha, ens).norm / nf);
  }
  return rep;
}

OperatorNormReport empirical_operator_norm(const Operator& op, double alpha, double gamma, const TestBattery& battery,
                                           const BallEnsemble& ens) {
  if (!(alpha + gamma <= 1.0)) throw ContractError("operator norm needs alpha + gamma <= 1");
  OperatorNormReport rep;
  for (std::size_t k = 0; k < battery.members.size(); ++k) {
    const GridFunction& f = battery.members[k];
    const double nf = bmo_alpha_norm(f, alpha, ens).norm;
    if (!(nf > 0.0)) {
      ++rep.skipped_zero;
      continue;
    }
    const double r = bmo_alpha_norm(op.apply(f), alpha + gamma, ens).norm / nf;
    rep.ratios.push_back(r);
    ++rep.evaluated;
    if (r > rep.max_ratio || rep.argmax < 0) {
      rep.max_ratio = std::max(rep.max_ratio, r);
      rep.argmax = static_cast<std::ptrdiff_t>(k);
    }
  }
  return rep;
}

}  // namespace schro
