#include "schro/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "schro/errors.hpp"
#include "schro/quadrature.hpp"

namespace schro {

namespace {
constexpr double kSqrtPi = 1.7724538509055160273;
}

const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Identity: return "identity";
    case OpKind::HeatAtT: return "heat-at-t";
    case OpKind::HeatMaximal: return "heat-maximal";
    case OpKind::PoissonAtT: return "poisson-sigma-at-t";
    case OpKind::PoissonMaximal: return "poisson-maximal";
    case OpKind::GHeat: return "g-heat";
    case OpKind::GPoisson: return "g-poisson";
    case OpKind::LaplaceMultiplier: return "laplace-multiplier";
    case OpKind::RieszComponent: return "riesz-component";
    case OpKind::NegativePower: return "negative-power";
  }
  return "?";
}

OpKind op_kind_from_name(const std::string& s) {
  for (OpKind k : {OpKind::Identity, OpKind::HeatAtT, OpKind::HeatMaximal, OpKind::PoissonAtT, OpKind::PoissonMaximal,
                   OpKind::GHeat, OpKind::GPoisson, OpKind::LaplaceMultiplier, OpKind::RieszComponent,
                   OpKind::NegativePower})
    if (s == op_kind_name(k)) return k;
  throw ContractError("unknown operator kind '" + s + "'");
}

// ---------------------------------------------------------------------------------------------
// Laplace symbols

const char* laplace_tag_name(LaplaceSymbol::Tag t) {
  switch (t) {
    case LaplaceSymbol::Tag::Constant: return "constant";
    case LaplaceSymbol::Tag::Exponential: return "exponential-decay";
    case LaplaceSymbol::Tag::Window: return "window";
    case LaplaceSymbol::Tag::Sampled: return "user-sampled";
  }
  return "?";
}

LaplaceSymbol LaplaceSymbol::constant(double A) {
  LaplaceSymbol s;
  s.tag = Tag::Constant;
  s.amplitude = A;
  return s;
}

LaplaceSymbol LaplaceSymbol::exponential(double A, double b) {
  if (!(b > 0.0)) throw ContractError("exponential symbol needs a positive rate");
  LaplaceSymbol s;
  s.tag = Tag::Exponential;
  s.amplitude = A;
  s.rate = b;
  return s;
}

LaplaceSymbol LaplaceSymbol::window_on(double A, double T) {
  if (!(T > 0.0)) throw ContractError("window symbol needs T > 0");
  LaplaceSymbol s;
  s.tag = Tag::Window;
  s.amplitude = A;
  s.window = T;
  return s;
}

LaplaceSymbol LaplaceSymbol::sampled(std::vector<double> ts, std::vector<double> as) {
  if (ts.size() != as.size() || ts.empty()) throw ContractError("sampled symbol needs matching nonempty t and a arrays");
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (!std::isfinite(ts[k]) || !std::isfinite(as[k]) || ts[k] < 0.0)
      throw ContractError("sampled symbol values must be finite with t >= 0");
    if (k > 0 && !(ts[k] > ts[k - 1])) throw ContractError("sampled symbol nodes must increase");
  }
  LaplaceSymbol s;
  s.tag = Tag::Sampled;
  s.ts = std::move(ts);
  s.as = std::move(as);
  return s;
}

double LaplaceSymbol::sup_norm() const {
  if (tag == Tag::Sampled) {
    double m = 0.0;
    for (double a : as) m = std::max(m, std::abs(a));
    return m;
  }
  return std::abs(amplitude);
}

double LaplaceSymbol::a_at(double t) const {
  switch (tag) {
    case Tag::Constant: return amplitude;
    case Tag::Exponential: return amplitude * std::exp(-rate * t);
    case Tag::Window: return t <= window ? amplitude : 0.0;
    case Tag::Sampled: {
      if (t <= ts.front()) return as.front();
      if (t >= ts.back()) return as.back();
      const auto it = std::upper_bound(ts.begin(), ts.end(), t);
      const std::size_t k = static_cast<std::size_t>(it - ts.begin()) - 1;
      const double u = (t - ts[k]) / (ts[k + 1] - ts[k]);
      return (1.0 - u) * as[k] + u * as[k + 1];
    }
  }
  return 0.0;
}

double LaplaceSymbol::multiplier(double lambda) const {
  double m = 0.0;
  switch (tag) {
    case Tag::Constant: m = amplitude; break;
    case Tag::Exponential: m = amplitude * lambda / (lambda + rate); break;
    case Tag::Window: m = -amplitude * std::expm1(-window * lambda); break;
    case Tag::Sampled: {
      // a is constant before the first node and after the last: integrating by parts leaves
      // a(0) plus the slope terms of the linear pieces.
      m = as.front();
      for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const double dt = ts[k + 1] - ts[k];
        const double slope = (as[k + 1] - as[k]) / dt;
        m += slope * std::exp(-lambda * ts[k]) * (-std::expm1(-lambda * dt)) / lambda;
      }
      break;
    }
  }
  const double bound = sup_norm();
  if (std::abs(m) > bound * (1.0 + 1e-8) + 1e-300) {
    std::ostringstream os;
    os << "laplace multiplier |m(" << lambda << ")| = " << std::abs(m) << " exceeds ||a||_inf = " << bound;
    throw Error(os.str());
  }
  return m;
}

// ---------------------------------------------------------------------------------------------
// Time grids

TGrid TGrid::maximal(double t_lo, double t_hi, int M) {
  if (M < 2 || !(t_lo > 0.0) || !(t_hi > t_lo)) throw ContractError("bad maximal t-grid");
  TGrid g;
  g.role = Role::MaximalSup;
  for (int k = 0; k < M; ++k) g.t.push_back(t_lo * std::pow(t_hi / t_lo, static_cast<double>(k) / (M - 1)));
  g.w.assign(g.t.size(), 0.0);
  return g;
}

TGrid TGrid::default_maximal(const Grid& grid, int M) {
  const double L2 = 2.0 * grid.half_width();
  return maximal(grid.h() * grid.h() / 4.0, 4.0 * L2 * L2, M);
}

TGrid TGrid::quadrature(double t_lo, double t_hi, double step) {
  const LogTrapezoid q = log_trapezoid(t_lo, t_hi, step);
  TGrid g;
  g.role = Role::Quadrature;
  g.t = q.t;
  g.w = q.w;
  return g;
}

void TGrid::check_maximal_invariants(const Grid& grid) const {
  const double L2 = 2.0 * grid.half_width();
  if (t.size() < 32) throw ContractError("maximal t-grid needs at least 32 nodes");
  if (t.front() > grid.h() * grid.h() * (1 + 1e-12)) throw ContractError("maximal t-grid must start at or below h^2");
  if (t.back() < L2 * L2 * (1 - 1e-12)) throw ContractError("maximal t-grid must reach (2L)^2");
}

// ---------------------------------------------------------------------------------------------
// Descriptors

OperatorDescriptor OperatorDescriptor::identity() { return {}; }

OperatorDescriptor OperatorDescriptor::heat(double t) {
  OperatorDescriptor d;
  d.kind = OpKind::HeatAtT;
  d.t = t;
  return d;
}

OperatorDescriptor OperatorDescriptor::heat_maximal(int M) {
  OperatorDescriptor d;
  d.kind = OpKind::HeatMaximal;
  d.t_count = M;
  return d;
}

OperatorDescriptor OperatorDescriptor::poisson(double sigma, double t) {
  OperatorDescriptor d;
  d.kind = OpKind::PoissonAtT;
  d.sigma = sigma;
  d.t = t;
  return d;
}

OperatorDescriptor OperatorDescriptor::poisson_maximal(double sigma, int M) {
  OperatorDescriptor d;
  d.kind = OpKind::PoissonMaximal;
  d.sigma = sigma;
  d.t_count = M;
  return d;
}

OperatorDescriptor OperatorDescriptor::g_heat() {
  OperatorDescriptor d;
  d.kind = OpKind::GHeat;
  return d;
}

OperatorDescriptor OperatorDescriptor::g_poisson() {
  OperatorDescriptor d;
  d.kind = OpKind::GPoisson;
  return d;
}

OperatorDescriptor OperatorDescriptor::laplace(LaplaceSymbol a) {
  OperatorDescriptor d;
  d.kind = OpKind::LaplaceMultiplier;
  d.symbol = std::move(a);
  return d;
}

OperatorDescriptor OperatorDescriptor::riesz(int axis) {
  OperatorDescriptor d;
  d.kind = OpKind::RieszComponent;
  d.axis = axis;
  return d;
}

OperatorDescriptor OperatorDescriptor::negative_power(double gamma) {
  OperatorDescriptor d;
  d.kind = OpKind::NegativePower;
  d.gamma = gamma;
  return d;
}

double OperatorDescriptor::gamma_order() const { return kind == OpKind::NegativePower ? gamma : 0.0; }

double OperatorDescriptor::q_lebesgue(int n) const {
  const double inv = 1.0 / p - gamma_order() / n;
  return inv > 0.0 ? 1.0 / inv : std::numeric_limits<double>::infinity();
}

double OperatorDescriptor::delta_in_use(double delta0) const {
  return delta > 0.0 ? delta : 0.9 * std::min(1.0, delta0);
}

bool OperatorDescriptor::vector_valued() const {
  return kind == OpKind::HeatMaximal || kind == OpKind::PoissonMaximal || kind == OpKind::GHeat ||
         kind == OpKind::GPoisson;
}

bool OperatorDescriptor::uses_sup_norm() const {
  return kind == OpKind::HeatMaximal || kind == OpKind::PoissonMaximal;
}

bool OperatorDescriptor::singular_kernel() const { return kind != OpKind::HeatAtT && kind != OpKind::PoissonAtT; }

void OperatorDescriptor::validate(int n, double delta0) const {
  if ((kind == OpKind::HeatAtT || kind == OpKind::PoissonAtT) && !(t > 0.0))
    throw ContractError("operator time t must be positive");
  if ((kind == OpKind::PoissonAtT || kind == OpKind::PoissonMaximal) && !(sigma > 0.0 && sigma < 1.0))
    throw ContractError("sigma must lie in (0, 1)");
  if (kind == OpKind::RieszComponent && (axis < 0 || axis >= n))
    throw ContractError("Riesz axis must be in 1.." + std::to_string(n));
  if (kind == OpKind::NegativePower && !(gamma > 0.0 && gamma < n))
    throw ContractError("negative power order gamma must lie in (0, n)");
  if ((kind == OpKind::HeatMaximal || kind == OpKind::PoissonMaximal) && t_count < 32)
    throw ContractError("maximal t-grid needs at least 32 nodes");
  if (vector_valued() && !uses_sup_norm() && !(quad_step > 0.0 && quad_step <= 0.5))
    throw ContractError("square-function quadrature step must lie in (0, 0.5]");
  if (!(p >= 1.0)) throw ContractError("Lebesgue exponent p must be >= 1");
  const double d = delta_in_use(delta0);
  if (!(d > 0.0 && d < std::min(1.0, delta0) + 1e-15))
    throw ContractError("smoothness exponent delta must satisfy 0 < delta < min(1, delta0)");
}

std::string OperatorDescriptor::label() const {
  std::ostringstream os;
  os << op_kind_name(kind);
  switch (kind) {
    case OpKind::HeatAtT: os << "[t=" << t << "]"; break;
    case OpKind::PoissonAtT: os << "[sigma=" << sigma << ",t=" << t << "]"; break;
    case OpKind::PoissonMaximal: os << "[sigma=" << sigma << "]"; break;
    case OpKind::LaplaceMultiplier: os << "[" << laplace_tag_name(symbol.tag) << "]"; break;
    case OpKind::RieszComponent: os << "[axis=" << axis + 1 << "]"; break;
    case OpKind::NegativePower: os << "[gamma=" << gamma << "]"; break;
    default: break;
  }
  return os.str();
}

// ---------------------------------------------------------------------------------------------
// Scalar symbols

double poisson_symbol(double sigma, double a, double rel_tol) {
  if (!(sigma > 0.0 && sigma < 1.0)) throw ContractError("sigma must lie in (0, 1)");
  if (!(a >= 0.0)) throw ContractError("poisson symbol needs a >= 0");
  if (a == 0.0) return 1.0;
  auto G = [&](double u) { return sigma * u - std::exp(u) - a * std::exp(-u); };
  const double u_star = std::log(0.5 * (sigma + std::sqrt(sigma * sigma + 4.0 * a)));
  try {
    return integrate_log_concave(G, u_star, rel_tol) / std::tgamma(sigma);
  } catch (const QuadratureError& e) {
    std::ostringstream os;
    os << "poisson symbol quadrature missed its tolerance at a = " << a << " (achieved " << e.achieved() << ")";
    throw QuadratureError(os.str(), e.achieved());
  }
}

double poisson_symbol_bessel(double sigma, double a) {
  if (a == 0.0) return 1.0;
  const double s = 2.0 * std::sqrt(a);
  return 2.0 / std::tgamma(sigma) * std::pow(0.5 * s, sigma) * std::cyl_bessel_k(sigma, s);
}

double poisson_derivative_symbol_by_subordination(double t, double lambda) {
  if (!(t > 0.0) || !(lambda > 0.0)) throw ContractError("derivative symbol needs t, lambda > 0");
  // (t / sqrt(pi)) int e^{-t^2/(4v)} (v d/dv e^{-v lambda}) v^{-3/2} dv, in u = log v.
  auto G = [&](double u) { return -t * t / (4.0 * std::exp(u)) - lambda * std::exp(u) + 0.5 * u; };
  const double u_star = std::log((0.5 + std::sqrt(0.25 + lambda * t * t)) / (2.0 * lambda));
  return -t / kSqrtPi * lambda * integrate_log_concave(G, u_star);
}

double negative_power_symbol_by_quadrature(double gamma, double lambda) {
  if (!(gamma > 0.0) || !(lambda > 0.0)) throw ContractError("negative power symbol needs gamma, lambda > 0");
  const double h = 0.5 * gamma;
  auto G = [&](double u) { return h * u - lambda * std::exp(u); };
  return integrate_log_concave(G, std::log(h / lambda)) / std::tgamma(h);
}

double g_quadrature_residual(const TGrid& grid, double lambda_min, double lambda_max, bool poisson) {
  const double smax = poisson ? std::sqrt(lambda_max) : lambda_max;
  const double smin = poisson ? std::sqrt(lambda_min) : lambda_min;
  // int_0^{t1} (t s e^{-ts})^2 dt/t <= (t1 s)^2 / 2; int_{tM}^inf ... = (1 + 2x) e^{-2x} / 4, x = tM s.
  const double lower = 0.5 * std::pow(grid.t.front() * smax, 2);
  const double x = grid.t.back() * smin;
  const double upper = 0.25 * (1.0 + 2.0 * x) * std::exp(-2.0 * x);
  return (lower + upper) / 0.25;
}

TGrid default_g_grid(const SpectralModel& model, bool poisson, double step) {
  const double smax = poisson ? std::sqrt(model.lambda_max()) : model.lambda_max();
  const double smin = poisson ? std::sqrt(model.lambda_min()) : model.lambda_min();
  return TGrid::quadrature(1e-4 / smax, 25.0 / smin, step);
}

// ---------------------------------------------------------------------------------------------
// Physical-space derivative

GridFunction axis_derivative(const GridFunction& u, int axis) {
  const Grid& g = u.grid;
  const int m = g.m();
  if (m < 5) throw ContractError("derivative stencil needs m >= 5");
  const std::size_t stride = g.stride(axis);
  const double inv = 1.0 / (12.0 * g.h());
  GridFunction out(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const int j = g.unflatten(i)[static_cast<std::size_t>(axis)];
    if (j != 0) continue;
    // Walk one line along the axis; index -1 and m are the zero walls.
    auto at = [&](int k) {
      if (k < 0 || k >= m) return 0.0;
      return u.values[i + static_cast<std::size_t>(k) * stride];
    };
    for (int k = 0; k < m; ++k) {
      double d;
      if (k == 0)
        d = -3 * at(-1) - 10 * at(0) + 18 * at(1) - 6 * at(2) + at(3);
      else if (k == m - 1)
        d = 3 * at(m) + 10 * at(m - 1) - 18 * at(m - 2) + 6 * at(m - 3) - at(m - 4);
      else
        d = at(k - 2) - 8 * at(k - 1) + 8 * at(k + 1) - at(k + 2);
      out.values[i + static_cast<std::size_t>(k) * stride] = d * inv;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Kernel engine: heat-time quadrature of factorized heat kernels (separable) or spectral sums (dense).

struct Operator::KernelEngine {
  const SpectralModel* M = nullptr;
  LogTrapezoid s;
  std::vector<Eigen::MatrixXd> E;   // per axis: e^{-s_k lambda_j}, rows k
  std::vector<Eigen::MatrixXd> dE;  // per axis: -lambda_j e^{-s_k lambda_j}

  KernelEngine(const SpectralModel& model, double s_lo) : M(&model) {
    s = log_trapezoid(s_lo, 40.0 / model.lambda_min(), 0.125);
    if (!model.separable()) return;
    for (const auto& ax : model.axes()) {
      const Eigen::Index K = static_cast<Eigen::Index>(s.t.size()), m = ax.lambda.size();
      Eigen::MatrixXd e(K, m), de(K, m);
      for (Eigen::Index k = 0; k < K; ++k)
        for (Eigen::Index j = 0; j < m; ++j) {
          e(k, j) = std::exp(-s.t[static_cast<std::size_t>(k)] * ax.lambda(j));
          de(k, j) = -ax.lambda(j) * e(k, j);
        }
      E.push_back(std::move(e));
      dE.push_back(std::move(de));
    }
  }

  // W_{s_k}(x, y) and s_k d/ds W at every quadrature node (separable mode).
  void heat_profile(std::size_t x, std::size_t y, std::vector<double>& W, std::vector<double>* sdW) const {
    const Grid& g = M->grid();
    const auto ix = g.unflatten(x), iy = g.unflatten(y);
    const std::size_t K = s.t.size();
    const int n = g.dim();
    std::vector<Eigen::VectorXd> S(static_cast<std::size_t>(n)), dS(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
      const auto& ax = M->axes()[static_cast<std::size_t>(a)];
      Eigen::VectorXd pp = ax.phi.row(ix[static_cast<std::size_t>(a)]).transpose().cwiseProduct(
          ax.phi.row(iy[static_cast<std::size_t>(a)]).transpose());
      S[static_cast<std::size_t>(a)] = E[static_cast<std::size_t>(a)] * pp;
      if (sdW) dS[static_cast<std::size_t>(a)] = dE[static_cast<std::size_t>(a)] * pp;
    }
    W.assign(K, 1.0);
    for (std::size_t k = 0; k < K; ++k)
      for (int a = 0; a < n; ++a) W[k] *= S[static_cast<std::size_t>(a)](static_cast<Eigen::Index>(k));
    if (sdW) {
      sdW->assign(K, 0.0);
      for (std::size_t k = 0; k < K; ++k) {
        double acc = 0.0;
        for (int a = 0; a < n; ++a) {
          double term = dS[static_cast<std::size_t>(a)](static_cast<Eigen::Index>(k));
          for (int b = 0; b < n; ++b)
            if (b != a) term *= S[static_cast<std::size_t>(b)](static_cast<Eigen::Index>(k));
          acc += term;
        }
        (*sdW)[k] = s.t[k] * acc;
      }
    }
  }

  // int_a^b W_s(x, y) ds by Gauss-Legendre in log s on unit-width chunks.
  double heat_integral(std::size_t x, std::size_t y, double a, double b) const {
    if (!(b > a)) return 0.0;
    const Grid& g = M->grid();
    const auto ix = g.unflatten(x), iy = g.unflatten(y);
    std::vector<Eigen::VectorXd> pp;
    for (int ax = 0; ax < g.dim(); ++ax) {
      const auto& e = M->axes()[static_cast<std::size_t>(ax)];
      pp.push_back(e.phi.row(ix[static_cast<std::size_t>(ax)]).transpose().cwiseProduct(
          e.phi.row(iy[static_cast<std::size_t>(ax)]).transpose()));
    }
    auto W = [&](double u) {
      const double sv = std::exp(u);
      double prod = sv;
      for (int ax = 0; ax < g.dim(); ++ax) {
        const auto& lam = M->axes()[static_cast<std::size_t>(ax)].lambda;
        prod *= ((-sv * lam.array()).exp() * pp[static_cast<std::size_t>(ax)].array()).sum();
      }
      return prod;
    };
    const double ua = std::log(a), ub = std::log(b);
    const int chunks = std::max(1, static_cast<int>(std::ceil(ub - ua)));
    double acc = 0.0;
    for (int c = 0; c < chunks; ++c) {
      const double lo = ua + (ub - ua) * c / chunks, hi = ua + (ub - ua) * (c + 1) / chunks;
      acc += gauss_integrate(W, lo, hi, 24);
    }
    return acc;
  }

  // (1/Gamma(g/2)) int W_s s^{g/2} ds/s with analytic end corrections.
  double negative_power(std::size_t x, std::size_t y, double gamma) const {
    std::vector<double> W;
    heat_profile(x, y, W, nullptr);
    const double h = 0.5 * gamma;
    double acc = 0.0;
    for (std::size_t k = 0; k < W.size(); ++k) acc += s.w[k] * std::pow(s.t[k], h) * W[k];
    acc += W.front() * std::pow(s.t.front(), h) / h;
    acc += W.back() * std::pow(s.t.back(), h - 1.0) / M->lambda_min();
    return acc / std::tgamma(h);
  }
};

// ---------------------------------------------------------------------------------------------
// Operator

Operator::Operator(OperatorDescriptor d, const SpectralModel& model) : d_(std::move(d)), model_(&model) {
  const Grid& g = model.grid();
  switch (d_.kind) {
    case OpKind::HeatMaximal:
    case OpKind::PoissonMaximal:
      tgrid_ = TGrid::default_maximal(g, d_.t_count);
      tgrid_->check_maximal_invariants(g);
      break;
    case OpKind::GHeat:
    case OpKind::GPoisson: {
      const bool poisson = d_.kind == OpKind::GPoisson;
      tgrid_ = default_g_grid(model, poisson, d_.quad_step);
      const double res = g_quadrature_residual(*tgrid_, model.lambda_min(), model.lambda_max(), poisson);
      if (res > 1e-6) {
        std::ostringstream os;
        os << "square-function tail residual " << res << " exceeds 1e-6";
        throw Error(os.str());
      }
      break;
    }
    default: break;
  }
  if (d_.kind == OpKind::RieszComponent && (d_.axis < 0 || d_.axis >= g.dim()))
    throw ContractError("Riesz axis out of range");
  double s_lo = 1e-6 * g.h() * g.h();
  if (tgrid_) s_lo = std::min(s_lo, tgrid_->t.front() * tgrid_->t.front() / 64.0);
  if (d_.kind == OpKind::PoissonAtT) s_lo = std::min(s_lo, d_.t * d_.t / 64.0);
  engine_ = std::make_unique<KernelEngine>(model, s_lo);
}

Operator::~Operator() = default;
Operator::Operator(Operator&&) noexcept = default;

double Operator::poisson_symbol_cached(double a) const {
  if (!poisson_table_) {
    double t_lo = d_.t, t_hi = d_.t;
    if (tgrid_) t_lo = tgrid_->t.front(), t_hi = tgrid_->t.back();
    const double lo = t_lo * t_lo * model_->lambda_min() / 4.0, hi = t_hi * t_hi * model_->lambda_max() / 4.0;
    const double sigma = d_.sigma;
    poisson_table_.emplace([sigma](double x) { return poisson_symbol(sigma, x); }, lo, std::max(hi, lo * 1.0001));
  }
  return (*poisson_table_)(a);
}

std::size_t Operator::slice_count() const { return tgrid_ ? tgrid_->t.size() : 1; }

double Operator::reduce(const std::vector<double>& slices) const {
  if (!d_.vector_valued()) return slices.empty() ? 0.0 : slices.front();
  if (d_.uses_sup_norm()) {
    double m = 0.0;
    for (double v : slices) m = std::max(m, std::abs(v));
    return m;
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < slices.size(); ++k) acc += tgrid_->w[k] * slices[k] * slices[k];
  return std::sqrt(acc);
}

void Operator::for_each_slice(const GridFunction& f,
                              const std::function<void(std::size_t, const GridFunction&)>& fn) const {
  const SpectralModel& M = *model_;
  if (!d_.vector_valued()) {
    fn(0, apply(f));
    return;
  }
  const auto& ts = tgrid_->t;
  if (d_.kind == OpKind::HeatMaximal) {
    for (std::size_t k = 0; k < ts.size(); ++k) fn(k, M.heat(ts[k], f));
    return;
  }
  const std::vector<double> c = M.forward(f);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double t = ts[k];
    Symbol phi;
    switch (d_.kind) {
      case OpKind::PoissonMaximal: phi = [&, t](double l) { return poisson_symbol_cached(t * t * l / 4.0); }; break;
      case OpKind::GHeat: phi = [t](double l) { return -t * l * std::exp(-t * l); }; break;
      default: phi = [t](double l) { const double s = t * std::sqrt(l); return -s * std::exp(-s); }; break;
    }
    fn(k, M.apply_coefficients(phi, c));
  }
}

GridFunction Operator::apply(const GridFunction& f) const {
  const SpectralModel& M = *model_;
  switch (d_.kind) {
    case OpKind::Identity: return f;
    case OpKind::HeatAtT: return M.heat(d_.t, f);
    case OpKind::PoissonAtT: {
      const double t = d_.t;
      return M.apply([&, t](double l) { return poisson_symbol_cached(t * t * l / 4.0); }, f);
    }
    case OpKind::LaplaceMultiplier: {
      if (d_.symbol.tag == LaplaceSymbol::Tag::Constant) return d_.symbol.amplitude * f;
      const LaplaceSymbol& a = d_.symbol;
      return M.apply([&a](double l) { return a.multiplier(l); }, f);
    }
    case OpKind::RieszComponent: {
      const GridFunction u = M.apply([](double l) { return 1.0 / std::sqrt(l); }, f);
      return axis_derivative(u, d_.axis);
    }
    case OpKind::NegativePower: {
      const double h = 0.5 * d_.gamma;
      return M.apply([h](double l) { return std::pow(l, -h); }, f);
    }
    default: break;
  }
  // Vector kinds: pointwise Banach norm of the slices.
  GridFunction out(f.grid);
  const bool sup = d_.uses_sup_norm();
  for_each_slice(f, [&](std::size_t k, const GridFunction& s) {
    if (sup) {
      for (std::size_t i = 0; i < s.size(); ++i) out.values[i] = std::max(out.values[i], std::abs(s.values[i]));
    } else {
      const double w = tgrid_->w[k];
      for (std::size_t i = 0; i < s.size(); ++i) out.values[i] += w * s.values[i] * s.values[i];
    }
  });
  if (!sup)
    for (double& v : out.values) v = std::sqrt(v);
  return out;
}

namespace {

// Dense-mode kernel: sum_k phi(lambda_k) Phi_k(x) Phi_k(y).
double dense_kernel(const SpectralModel& M, std::size_t x, std::size_t y, const Symbol& phi) {
  const auto& lam = M.eigenvalues();
  const Eigen::MatrixXd& P = M.dense_phi();
  const auto xi = static_cast<Eigen::Index>(x), yi = static_cast<Eigen::Index>(y);
  double acc = 0.0;
  for (std::size_t k = 0; k < lam.size(); ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    acc += phi(lam[k]) * P(xi, ki) * P(yi, ki);
  }
  return acc;
}

}  // namespace

double Operator::kernel(std::size_t x, std::size_t y, std::vector<double>* slices) const {
  const SpectralModel& M = *model_;
  const Grid& g = M.grid();
  if (x == y && d_.singular_kernel()) throw ContractError("on-diagonal sample for a singular kernel");
  const double delta = x == y ? 1.0 / g.cell_volume() : 0.0;
  const KernelEngine& E = *engine_;
  std::vector<double> local;
  std::vector<double>& out = slices ? *slices : local;
  out.clear();

  if (!M.separable()) {
    // Spectral sums over the full dense eigenbasis.
    if (d_.kind == OpKind::RieszComponent) {
      // Same stencil as axis_derivative applied to the L^{-1/2} kernel column.
      const GridFunction col = M.apply([](double l) { return 1.0 / std::sqrt(l); }, [&] {
        GridFunction e(g);
        e.values[y] = 1.0 / g.cell_volume();
        return e;
      }());
      return axis_derivative(col, d_.axis).values[x];
    }
    if (d_.vector_valued()) {
      for (std::size_t k = 0; k < tgrid_->t.size(); ++k) {
        const double t = tgrid_->t[k];
        Symbol phi;
        switch (d_.kind) {
          case OpKind::HeatMaximal: phi = [t](double l) { return std::exp(-t * l); }; break;
          case OpKind::PoissonMaximal: phi = [&, t](double l) { return poisson_symbol_cached(t * t * l / 4.0); }; break;
          case OpKind::GHeat: phi = [t](double l) { return -t * l * std::exp(-t * l); }; break;
          default: phi = [t](double l) { const double s = t * std::sqrt(l); return -s * std::exp(-s); }; break;
        }
        out.push_back(dense_kernel(M, x, y, phi));
      }
      return reduce(out);
    }
    Symbol phi;
    switch (d_.kind) {
      case OpKind::Identity: return delta;
      case OpKind::HeatAtT: return M.heat_kernel(d_.t, x, y);
      case OpKind::PoissonAtT: phi = [&](double l) { return poisson_symbol_cached(d_.t * d_.t * l / 4.0); }; break;
      case OpKind::LaplaceMultiplier: phi = [&](double l) { return d_.symbol.multiplier(l); }; break;
      default: phi = [&](double l) { return std::pow(l, -0.5 * d_.gamma); }; break;
    }
    const double v = dense_kernel(M, x, y, phi);
    out.push_back(v);
    return v;
  }

  switch (d_.kind) {
    case OpKind::Identity: out.push_back(delta); return delta;
    case OpKind::HeatAtT: {
      const double v = M.heat_kernel(d_.t, x, y);
      out.push_back(v);
      return v;
    }
    case OpKind::HeatMaximal:
      for (double t : tgrid_->t) out.push_back(M.heat_kernel(t, x, y));
      return reduce(out);
    case OpKind::GHeat: {
      // t d/dt W_t(x, y) from per-axis sums.
      const auto ix = g.unflatten(x), iy = g.unflatten(y);
      for (double t : tgrid_->t) {
        double prod = 1.0, dsum = 0.0;
        std::vector<double> S(static_cast<std::size_t>(g.dim())), dS(static_cast<std::size_t>(g.dim()));
        for (int a = 0; a < g.dim(); ++a) {
          const auto& ax = M.axes()[static_cast<std::size_t>(a)];
          double s = 0.0, ds = 0.0;
          for (Eigen::Index k = 0; k < ax.lambda.size(); ++k) {
            const double e = std::exp(-t * ax.lambda(k)) * ax.phi(ix[static_cast<std::size_t>(a)], k) *
                             ax.phi(iy[static_cast<std::size_t>(a)], k);
            s += e;
            ds -= ax.lambda(k) * e;
          }
          S[static_cast<std::size_t>(a)] = s;
          dS[static_cast<std::size_t>(a)] = ds;
          prod *= s;
        }
        for (int a = 0; a < g.dim(); ++a) {
          double term = dS[static_cast<std::size_t>(a)];
          for (int b = 0; b < g.dim(); ++b)
            if (b != a) term *= S[static_cast<std::size_t>(b)];
          dsum += term;
        }
        (void)prod;
        out.push_back(t * dsum);
      }
      return reduce(out);
    }
    case OpKind::NegativePower: {
      const double v = E.negative_power(x, y, d_.gamma);
      out.push_back(v);
      return v;
    }
    case OpKind::RieszComponent: {
      // Fourth-order stencil of the L^{-1/2} kernel in x along the axis, walls are zero.
      const int m = g.m();
      const auto ix = g.unflatten(x);
      const int j = ix[static_cast<std::size_t>(d_.axis)];
      auto k1 = [&](int jj) {
        if (jj < 0 || jj >= m) return 0.0;
        auto p = ix;
        p[static_cast<std::size_t>(d_.axis)] = jj;
        return E.negative_power(g.flatten(p), y, 1.0);
      };
      double d;
      if (j == 0)
        d = -3 * k1(-1) - 10 * k1(0) + 18 * k1(1) - 6 * k1(2) + k1(3);
      else if (j == m - 1)
        d = 3 * k1(m) + 10 * k1(m - 1) - 18 * k1(m - 2) + 6 * k1(m - 3) - k1(m - 4);
      else
        d = k1(j - 2) - 8 * k1(j - 1) + 8 * k1(j + 1) - k1(j + 2);
      const double v = d / (12.0 * g.h());
      out.push_back(v);
      return v;
    }
    default: break;
  }

  // Remaining kinds integrate W_s or s dW/ds against a weight in ds/s.
  std::vector<double> W, sdW;
  const bool need_derivative = d_.kind == OpKind::GPoisson;
  E.heat_profile(x, y, W, need_derivative ? &sdW : nullptr);
  const auto& s = E.s.t;
  const auto& w = E.s.w;

  auto poisson_at = [&](double t) {
    const double sig = d_.sigma;
    const double c = std::pow(t, 2 * sig) / (std::pow(4.0, sig) * std::tgamma(sig));
    double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) acc += w[k] * std::exp(-t * t / (4 * s[k])) * std::pow(s[k], -sig) * W[k];
    acc += W.back() * std::pow(s.back(), -sig - 1.0) / M.lambda_min();
    return c * acc;
  };
  auto gpoisson_at = [&](double t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) acc += w[k] * std::exp(-t * t / (4 * s[k])) / std::sqrt(s[k]) * sdW[k];
    return t / kSqrtPi * acc;
  };

  switch (d_.kind) {
    case OpKind::PoissonAtT: {
      const double v = poisson_at(d_.t);
      out.push_back(v);
      return v;
    }
    case OpKind::PoissonMaximal:
      for (double t : tgrid_->t) out.push_back(poisson_at(t));
      return reduce(out);
    case OpKind::GPoisson:
      for (double t : tgrid_->t) out.push_back(gpoisson_at(t));
      return reduce(out);
    case OpKind::LaplaceMultiplier: {
      const LaplaceSymbol& a = d_.symbol;
      double v = 0.0;
      switch (a.tag) {
        case LaplaceSymbol::Tag::Constant: v = a.amplitude * delta; break;
        case LaplaceSymbol::Tag::Window: v = a.amplitude * (delta - M.heat_kernel(a.window, x, y)); break;
        case LaplaceSymbol::Tag::Exponential: {
          double acc = 0.0;
          for (std::size_t k = 0; k < s.size(); ++k) acc += w[k] * s[k] * std::exp(-a.rate * s[k]) * W[k];
          v = a.amplitude * (delta - a.rate * acc);
          break;
        }
        case LaplaceSymbol::Tag::Sampled: {
          // By parts: a(0) delta + sum_k slope_k int_{t_k}^{t_{k+1}} W_s ds, each piece in log s.
          v = a.as.front() * delta;
          for (std::size_t k = 0; k + 1 < a.ts.size(); ++k) {
            const double slope = (a.as[k + 1] - a.as[k]) / (a.ts[k + 1] - a.ts[k]);
            if (slope != 0.0) v += slope * E.heat_integral(x, y, std::max(a.ts[k], s.front()), a.ts[k + 1]);
          }
          break;
        }
      }
      out.push_back(v);
      return v;
    }
    default: break;
  }
  throw Error("kernel evaluation not implemented for this kind");
}

// ---------------------------------------------------------------------------------------------
// Entry points

GridFunction heat_apply(const SpectralModel& M, double t, const GridFunction& f) {
  if (!(t > 0.0)) throw ContractError("heat_apply needs t > 0");
  return M.heat(t, f);
}

GridFunction heat_maximal(const SpectralModel& M, const GridFunction& f, const TGrid& grid) {
  if (grid.role != TGrid::Role::MaximalSup) throw ContractError("heat_maximal needs a sup-role t-grid");
  GridFunction out(f.grid);
  for (double t : grid.t) {
    const GridFunction s = M.heat(t, f);
    for (std::size_t i = 0; i < s.size(); ++i) out.values[i] = std::max(out.values[i], std::abs(s.values[i]));
  }
  return out;
}

GridFunction poisson_sigma_apply(const SpectralModel& M, double sigma, double t, const GridFunction& f) {
  OperatorDescriptor d = OperatorDescriptor::poisson(sigma, t);
  d.validate(M.grid().dim(), 2.0);
  return Operator(d, M).apply(f);
}

GridFunction poisson_maximal(const SpectralModel& M, double sigma, const GridFunction& f, const TGrid& grid) {
  if (grid.role != TGrid::Role::MaximalSup) throw ContractError("poisson_maximal needs a sup-role t-grid");
  if (!(sigma > 0.0 && sigma < 1.0)) throw ContractError("sigma must lie in (0, 1)");
  const double lo = grid.t.front() * grid.t.front() * M.lambda_min() / 4.0;
  const double hi = grid.t.back() * grid.t.back() * M.lambda_max() / 4.0;
  const SymbolTable table([sigma](double a) { return poisson_symbol(sigma, a); }, lo, hi);
  const std::vector<double> c = M.forward(f);
  GridFunction out(f.grid);
  for (double t : grid.t) {
    const GridFunction s = M.apply_coefficients([&](double l) { return table(t * t * l / 4.0); }, c);
    for (std::size_t i = 0; i < s.size(); ++i) out.values[i] = std::max(out.values[i], std::abs(s.values[i]));
  }
  return out;
}

namespace {

GridFunction square_function(const SpectralModel& M, const GridFunction& f, const TGrid& grid, bool poisson) {
  if (grid.role != TGrid::Role::Quadrature) throw ContractError("square functions need a quadrature-role t-grid");
  const double res = g_quadrature_residual(grid, M.lambda_min(), M.lambda_max(), poisson);
  if (res > 1e-6) {
    std::ostringstream os;
    os << "square-function tail residual " << res << " exceeds 1e-6";
    throw Error(os.str());
  }
  const std::vector<double> c = M.forward(f);
  GridFunction out(f.grid);
  for (std::size_t k = 0; k < grid.t.size(); ++k) {
    const double t = grid.t[k];
    const GridFunction s = poisson ? M.apply_coefficients([t](double l) { const double u = t * std::sqrt(l); return -u * std::exp(-u); }, c)
                                   : M.apply_coefficients([t](double l) { return -t * l * std::exp(-t * l); }, c);
    for (std::size_t i = 0; i < s.size(); ++i) out.values[i] += grid.w[k] * s.values[i] * s.values[i];
  }
  for (double& v : out.values) v = std::sqrt(v);
  return out;
}

}  // namespace

GridFunction g_heat(const SpectralModel& M, const GridFunction& f, const TGrid& grid) {
  return square_function(M, f, grid, false);
}

GridFunction g_poisson(const SpectralModel& M, const GridFunction& f, const TGrid& grid) {
  return square_function(M, f, grid, true);
}

GridFunction laplace_multiplier(const SpectralModel& M, const LaplaceSymbol& a, const GridFunction& f) {
  return Operator(OperatorDescriptor::laplace(a), M).apply(f);
}

GridFunction riesz_apply(const SpectralModel& M, int axis, const GridFunction& f) {
  if (axis < 0 || axis >= M.grid().dim()) throw ContractError("Riesz axis out of range");
  const GridFunction u = M.apply([](double l) { return 1.0 / std::sqrt(l); }, f);
  return axis_derivative(u, axis);
}

GridFunction negative_power(const SpectralModel& M, double gamma, const GridFunction& f) {
  if (!(gamma > 0.0)) throw ContractError("negative power needs gamma > 0");
  const double h = 0.5 * gamma;
  return M.apply([h](double l) { return std::pow(l, -h); }, f);
}

GridFunction negative_power_quadrature(const SpectralModel& M, double gamma, const GridFunction& f) {
  if (!(gamma > 0.0)) throw ContractError("negative power needs gamma > 0");
  const SymbolTable table([gamma](double l) { return negative_power_symbol_by_quadrature(gamma, l); }, M.lambda_min(),
                          M.lambda_max(), 1e-11, 0.0);
  return M.apply([&](double l) { return table(l); }, f);
}

double riesz_defect(const SpectralModel& M, const Potential& V, const GridFunction& f) {
  const GridFunction u = M.apply([](double l) { return 1.0 / std::sqrt(l); }, f);
  double energy = 0.0;
  for (int a = 0; a < M.grid().dim(); ++a) {
    const double d = norm2(axis_derivative(u, a));
    energy += d * d;
  }
  const GridFunction Vs = V.samples();
  double pot = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) pot += Vs.values[i] * u.values[i] * u.values[i];
  energy += pot * M.grid().cell_volume();
  const double ff = inner(f, f);
  return energy / ff - 1.0;
}

}  // namespace schro
