#include "schro/rho.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "schro/errors.hpp"

namespace schro {

const char* ball_class_name(BallClass c) {
  switch (c) {
    case BallClass::SubCritical: return "sub-critical";
    case BallClass::Intermediate: return "intermediate";
    case BallClass::Critical: return "critical";
  }
  return "?";
}

BallClass classify_ball(double s, double rho) {
  if (s <= 0.5 * rho) return BallClass::SubCritical;
  if (s < rho) return BallClass::Intermediate;
  return BallClass::Critical;
}

double critical_quantity(const Potential& V, const Point& x, double r) {
  return std::pow(r, 2.0 - V.grid().dim()) * V.ball_integral(x, r);
}

namespace {

RhoResult scan_from(const Potential& V, const Point& x, double r_min, double cap, const RhoScan& scan) {
  auto admissible = [&](double r) { return critical_quantity(V, x, r) <= 1.0; };
  if (!admissible(r_min)) throw RhoBelowResolution("rho below resolution");
  const int K = r_min < cap ? std::max(scan.radii, 2) : 1;
  int last = 0;
  double r_last = r_min, r_next = r_min;
  for (int k = 1; k < K; ++k) {
    const double r = r_min * std::pow(cap / r_min, static_cast<double>(k) / (K - 1));
    if (admissible(r)) {
      last = k;
      r_last = r;
    }
  }
  if (last == K - 1) return {cap, true, false};
  r_next = r_min * std::pow(cap / r_min, static_cast<double>(last + 1) / (K - 1));
  double lo = r_last, hi = r_next;
  for (int it = 0; it < scan.max_bisect && (hi - lo) > scan.rel_tol * lo; ++it) {
    const double mid = 0.5 * (lo + hi);
    (admissible(mid) ? lo : hi) = mid;
  }
  return {0.5 * (lo + hi), false, false};
}

}  // namespace

RhoResult critical_radius(const Potential& V, const Point& x, const RhoScan& scan) {
  const double cap = V.grid().distance_to_boundary(x);
  if (!(cap > 0.0)) throw ContractError("critical radius requested outside the open box");
  const double r_min = std::min(scan.r_min_cells * V.grid().h(), cap);
  return scan_from(V, x, r_min, cap, scan);
}

RhoField::RhoField(Potential V, RhoScan scan)
    : V_(std::move(V)), scan_(scan), rho_(V_.grid().size(), 0.0), flags_(V_.grid().size(), 0) {}

RhoResult RhoField::compute(const Point& x) const {
  const double cap = V_.grid().distance_to_boundary(x);
  if (!(cap > 0.0)) throw ContractError("critical radius requested outside the open box");
  double r_min = std::min(scan_.r_min_cells * V_.grid().h(), cap);
  try {
    return scan_from(V_, x, r_min, cap, scan_);
  } catch (const RhoBelowResolution&) {
    // Large potentials: restart the scan well below the grid scale.
    for (int k = 0; k < 3; ++k) {
      r_min /= 64.0;
      try {
        RhoResult r = scan_from(V_, x, r_min, cap, scan_);
        r.refined_below = true;
        return r;
      } catch (const RhoBelowResolution&) {
      }
    }
    throw;
  }
}

RhoResult RhoField::result(std::size_t idx) const {
  if (!(flags_[idx] & 1u)) {
    const RhoResult r = compute(grid().point(idx));
    rho_[idx] = r.rho;
    flags_[idx] = static_cast<std::uint8_t>(1u | (r.capped ? 2u : 0u) | (r.refined_below ? 4u : 0u));
  }
  return {rho_[idx], (flags_[idx] & 2u) != 0, (flags_[idx] & 4u) != 0};
}

double RhoField::at(std::size_t idx) const { return result(idx).rho; }
bool RhoField::capped(std::size_t idx) const { return result(idx).capped; }
bool RhoField::refined_below(std::size_t idx) const { return result(idx).refined_below; }
RhoResult RhoField::at_point(const Point& x) const { return compute(x); }

void RhoField::compute_all() const {
  for (std::size_t i = 0; i < grid().size(); ++i) result(i);
}

double RhoField::max_scanned() const noexcept { return grid().half_width(); }

VerificationReport reverse_holder_constant(const Potential& V, double q, std::span<const BallSpec> balls) {
  if (!std::isfinite(q) || !(q >= 1.0)) throw ContractError("reverse Hölder check needs a finite q >= 1");
  VerificationReport rep;
  rep.name = "REVERSE_HOLDER";
  rep.header = "q=" + std::to_string(q) + "; cell-center ball averages";
  rep.key_columns = {"x0", "x1", "x2", "x3", "radius"};
  const Grid& g = V.grid();
  for (const BallSpec& b : balls) {
    const auto cells = g.cells_in_ball(b.center, b.radius);
    if (cells.empty()) {
      ++rep.excluded_constraint;
      continue;
    }
    // Mean as first + average deviation so constant samples give the value exactly.
    const double first = V.value(cells.front());
    double dev = 0.0;
    for (std::size_t i : cells) dev += V.value(i) - first;
    const double m1 = first + dev / static_cast<double>(cells.size());
    if (!(m1 > 0.0)) {
      ++rep.degenerate;
      continue;
    }
    double mq = 0.0;
    for (std::size_t i : cells) mq += std::pow(V.value(i) / m1, q);
    const double ratio = std::pow(mq / static_cast<double>(cells.size()), 1.0 / q);
    rep.add_ratio({b.center[0], b.center[1], b.center[2], b.center[3], b.radius}, ratio * m1, m1, ratio);
  }
  return rep;
}

VerificationReport rho_equivalence_check(const RhoField& rho, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  VerificationReport rep;
  rep.name = "RHO_EQUIVALENCE";
  rep.key_columns = {"x_index", "y_index", "distance"};
  const Grid& g = rho.grid();
  struct Pair {
    double rx, ry, d;
  };
  std::vector<Pair> used;
  double c1 = 1.0;
  for (const auto& [ix, iy] : pairs) {
    const RhoResult a = rho.result(ix), b = rho.result(iy);
    if (a.capped || b.capped) {
      ++rep.excluded_constraint;
      continue;
    }
    const double d = distance(g.point(ix), g.point(iy), g.dim());
    used.push_back({a.rho, b.rho, d});
    const double r = b.rho / a.rho;
    rep.add_ratio({static_cast<double>(ix), static_cast<double>(iy), d}, b.rho, a.rho, r);
    if (d <= a.rho) c1 = std::min(c1, std::min(r, 1.0 / r));
  }
  // Smallest c over a k0 grid; ties go to the smaller k0.
  double best_c = std::numeric_limits<double>::infinity(), best_k = 1.0;
  for (int step = 0; step <= 60; ++step) {
    const double k0 = 1.0 + 0.25 * step;
    double c = 1.0;
    for (const Pair& p : used) {
      const double u = 1.0 + p.d / p.rx;
      c = std::max(c, p.rx * std::pow(u, -k0) / p.ry);
      c = std::max(c, p.ry / (p.rx * std::pow(u, k0 / (k0 + 1.0))));
    }
    if (c < best_c) {
      best_c = c;
      best_k = k0;
    }
  }
  if (used.empty()) best_c = 1.0;
  rep.extras["c"] = best_c;
  rep.extras["k0"] = best_k;
  rep.extras["C1"] = c1;
  rep.constant = best_c;
  return rep;
}

CriticalCovering critical_covering(const RhoField& rho) {
  const Grid& g = rho.grid();
  const std::size_t N = g.size();
  rho.compute_all();
  std::vector<std::size_t> order(N);
  for (std::size_t i = 0; i < N; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rho.at(a) > rho.at(b); });

  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  CriticalCovering cov;
  cov.first_cover.assign(N, kNone);
  std::size_t remaining = N;
  for (std::size_t idx : order) {
    if (remaining == 0) break;
    if (cov.first_cover[idx] != kNone) continue;
    const auto k = static_cast<std::uint32_t>(cov.centers.size());
    const RhoResult r = rho.result(idx);
    cov.centers.push_back(idx);
    cov.radii.push_back(r.rho);
    cov.capped.push_back(r.capped);
    auto mark = [&](std::size_t j) {
      if (cov.first_cover[j] == kNone) {
        cov.first_cover[j] = k;
        --remaining;
      }
    };
    if (r.capped) {
      for (std::size_t j = 0; j < N; ++j) mark(j);
    } else {
      for (std::size_t j : g.cells_in_ball(g.point(idx), r.rho)) mark(j);
      mark(idx);
    }
  }

  std::vector<std::uint32_t> count(N, 0);
  for (std::size_t k = 0; k < cov.centers.size(); ++k) {
    if (cov.capped[k]) {
      for (auto& c : count) ++c;
    } else {
      for (std::size_t j : g.cells_in_ball(g.point(cov.centers[k]), 4.0 * cov.radii[k])) ++count[j];
    }
  }
  cov.overlap = N ? *std::max_element(count.begin(), count.end()) : 0;
  return cov;
}

std::size_t recount_overlap(const RhoField& rho, const CriticalCovering& cover) {
  const Grid& g = rho.grid();
  std::size_t best = 0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    const Point p = g.point(j);
    std::size_t c = 0;
    for (std::size_t k = 0; k < cover.centers.size(); ++k) {
      if (cover.capped[k]) {
        ++c;
        continue;
      }
      const double r = 4.0 * cover.radii[k];
      if (distance_sq(p, g.point(cover.centers[k]), g.dim()) <= r * r * (1.0 + 1e-12)) ++c;
    }
    best = std::max(best, c);
  }
  return best;
}

}  // namespace schro
