#include "schro/experiment.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "schro/errors.hpp"
#include "schro/io.hpp"
#include "schro/rho.hpp"
#include "schro/spectral.hpp"
#include "schro/t1.hpp"

namespace schro {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names = {"rho", "cover", "spectrum", "bmo", "t1", "verify", "norms"};
  return names;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------------------------
// Parsing

namespace {

// Object reader that knows its path and rejects keys it was not told about.
class Section {
 public:
  Section(const json& j, std::string path, std::initializer_list<const char*> keys) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail("expected an object");
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items())
      if (!ok.count(k)) throw ConfigError("config field " + field(k) + ": unknown key");
  }

  bool has(const char* k) const { return j_.contains(k); }
  const json& raw(const char* k) const { return j_.at(k); }
  std::string field(const std::string& k) const { return path_ + "." + k; }
  [[noreturn]] void fail(const std::string& what, const char* k = nullptr) const {
    throw ConfigError("config field " + (k ? field(k) : path_) + ": " + what);
  }

  void number(const char* k, double& out) const {
    if (!has(k)) return;
    if (!raw(k).is_number()) fail("expected a number", k);
    out = raw(k).get<double>();
  }
  template <class Int>
  void integer(const char* k, Int& out) const {
    if (!has(k)) return;
    if (!raw(k).is_number_integer()) fail("expected an integer", k);
    if (std::is_unsigned_v<Int> && raw(k).get<long long>() < 0) fail("expected a nonnegative integer", k);
    out = raw(k).get<Int>();
  }
  void boolean(const char* k, bool& out) const {
    if (!has(k)) return;
    if (!raw(k).is_boolean()) fail("expected true or false", k);
    out = raw(k).get<bool>();
  }
  void string(const char* k, std::string& out) const {
    if (!has(k)) return;
    if (!raw(k).is_string()) fail("expected a string", k);
    out = raw(k).get<std::string>();
  }
  void numbers(const char* k, std::vector<double>& out) const {
    if (!has(k)) return;
    if (!raw(k).is_array()) fail("expected an array of numbers", k);
    out.clear();
    for (std::size_t i = 0; i < raw(k).size(); ++i) {
      if (!raw(k)[i].is_number()) fail("expected a number", (std::string(k) + "[" + std::to_string(i) + "]").c_str());
      out.push_back(raw(k)[i].get<double>());
    }
  }
  void ints(const char* k, std::vector<int>& out) const {
    if (!has(k)) return;
    if (!raw(k).is_array()) fail("expected an array of integers", k);
    out.clear();
    for (std::size_t i = 0; i < raw(k).size(); ++i) {
      if (!raw(k)[i].is_number_integer())
        fail("expected an integer", (std::string(k) + "[" + std::to_string(i) + "]").c_str());
      out.push_back(raw(k)[i].get<int>());
    }
  }
  void strings(const char* k, std::vector<std::string>& out) const {
    if (!has(k)) return;
    if (!raw(k).is_array()) fail("expected an array of strings", k);
    out.clear();
    for (std::size_t i = 0; i < raw(k).size(); ++i) {
      if (!raw(k)[i].is_string()) fail("expected a string", (std::string(k) + "[" + std::to_string(i) + "]").c_str());
      out.push_back(raw(k)[i].get<std::string>());
    }
  }
  // Reverse Hölder exponents: a number, or "inf" / null for the infinite exponent.
  void exponent(const char* k, double& out) const {
    if (!has(k)) return;
    const json& v = raw(k);
    if (v.is_null() || (v.is_string() && v.get<std::string>() == "inf")) {
      out = kInfiniteQ;
      return;
    }
    if (!v.is_number()) fail("expected a number, \"inf\" or null", k);
    out = v.get<double>();
  }

 private:
  const json& j_;
  std::string path_;
};

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

double delta0_of(int n, double q) { return std::isinf(q) ? 2.0 : 2.0 - n / q; }

json exponent_json(double q) { return std::isinf(q) ? json("inf") : json(q); }

ExperimentConfig from_json(const json& root) {
  ExperimentConfig c;
  Section top(root, "$", {"schema", "seed", "grid", "potential", "operators", "ensemble", "probes", "rho", "verify",
                          "t1", "bmo", "norms", "checks", "output", "tolerances"});
  if (!top.has("schema")) top.fail("missing required key", "schema");
  top.string("schema", c.schema);
  if (c.schema != kExperimentSchema) top.fail("unsupported schema '" + c.schema + "', expected " + kExperimentSchema, "schema");
  top.integer("seed", c.seed);
  top.string("output", c.output);
  top.strings("checks", c.checks);

  bool ensemble_margin = false, probe_margin = false, t1_margin = false;
  if (top.has("grid")) {
    Section s(top.raw("grid"), "$.grid", {"n", "m", "L", "margin"});
    s.integer("n", c.grid.n);
    s.integer("m", c.grid.m);
    s.number("L", c.grid.L);
    s.number("margin", c.grid.margin);
  }
  if (top.has("potential")) {
    Section s(top.raw("potential"), "$.potential", {"preset", "constant", "coeffs", "q", "mode", "dense_cap"});
    s.string("preset", c.potential.preset);
    s.number("constant", c.potential.constant);
    s.numbers("coeffs", c.potential.coeffs);
    s.exponent("q", c.potential.q);
    std::string mode = "separable";
    s.string("mode", mode);
    if (mode == "separable")
      c.potential.mode = PotentialMode::Separable;
    else if (mode == "dense")
      c.potential.mode = PotentialMode::Dense;
    else
      s.fail("expected \"separable\" or \"dense\"", "mode");
    s.integer("dense_cap", c.potential.dense_cap);
  }
  if (top.has("operators")) {
    const json& ops = top.raw("operators");
    if (!ops.is_array()) top.fail("expected an array of operator descriptors", "operators");
    for (std::size_t i = 0; i < ops.size(); ++i) {
      const std::string where = "$.operators[" + std::to_string(i) + "]";
      try {
        c.operators.push_back(descriptor_from_json(ops[i], where));
      } catch (const ContractError& e) {
        throw ConfigError(std::string("config field ") + e.what());
      }
    }
  }
  if (top.has("ensemble")) {
    Section s(top.raw("ensemble"), "$.ensemble",
              {"centers_per_axis", "radii_per_decade", "r_min_cells", "r_max", "margin", "center_span", "rho_relative"});
    s.integer("centers_per_axis", c.ensemble.centers_per_axis);
    s.integer("radii_per_decade", c.ensemble.radii_per_decade);
    s.number("r_min_cells", c.ensemble.r_min_cells);
    s.number("r_max", c.ensemble.r_max);
    ensemble_margin = s.has("margin");
    s.number("margin", c.ensemble.margin);
    s.number("center_span", c.ensemble.center_span);
    s.boolean("rho_relative", c.ensemble.rho_relative);
  }
  if (top.has("probes")) {
    Section s(top.raw("probes"), "$.probes",
              {"count", "margin", "tau_min", "tau_min_free", "max_r2_over_t", "r_min_cells"});
    s.integer("count", c.probes.count);
    probe_margin = s.has("margin");
    s.number("margin", c.probes.margin);
    s.number("tau_min", c.probes.tau_min);
    s.number("tau_min_free", c.probes.tau_min_free);
    s.number("max_r2_over_t", c.probes.max_r2_over_t);
    s.number("r_min_cells", c.probes.r_min_cells);
  }
  if (!ensemble_margin) c.ensemble.margin = c.grid.margin;
  if (!probe_margin) c.probes.margin = c.grid.margin;
  if (top.has("rho")) {
    Section s(top.raw("rho"), "$.rho", {"max_rows"});
    s.integer("max_rows", c.rho.max_rows);
  }
  if (top.has("verify")) {
    Section s(top.raw("verify"), "$.verify",
              {"estimates", "Ns", "delta", "gamma", "omega_rate", "gauss_rate", "rho_fraction", "climb_starts",
               "climb_steps"});
    auto& p = c.verify.params;
    s.strings("estimates", c.verify.estimates);
    s.ints("Ns", p.Ns);
    s.number("delta", p.delta);
    s.number("gamma", p.gamma);
    s.number("omega_rate", p.omega_rate);
    s.number("gauss_rate", p.gauss_rate);
    s.number("rho_fraction", p.rho_fraction);
    s.integer("climb_starts", p.climb_starts);
    s.integer("climb_steps", p.climb_steps);
  }
  if (top.has("t1")) {
    Section s(top.raw("t1"), "$.t1", {"alphas", "doubling", "margin", "sensitivity_threshold"});
    s.numbers("alphas", c.t1.alphas);
    s.boolean("doubling", c.t1.doubling);
    t1_margin = s.has("margin");
    s.number("margin", c.t1.margin);
    s.number("sensitivity_threshold", c.t1.sensitivity_threshold);
  }
  if (!t1_margin) c.t1.margin = 0.5 * c.grid.margin;
  if (top.has("bmo")) {
    Section s(top.raw("bmo"), "$.bmo", {"alphas", "centers", "scales", "min_scale"});
    s.numbers("alphas", c.bmo.alphas);
    s.integer("centers", c.bmo.centers);
    s.integer("scales", c.bmo.scales);
    s.number("min_scale", c.bmo.min_scale);
  }
  if (top.has("norms")) {
    Section s(top.raw("norms"), "$.norms", {"alphas", "battery"});
    s.numbers("alphas", c.norms.alphas);
    s.integer("battery", c.norms.battery);
  }
  if (top.has("tolerances")) {
    Section s(top.raw("tolerances"), "$.tolerances", {"verify_max_delta", "t1_max_delta", "bmo_max_spread"});
    s.number("verify_max_delta", c.tolerances.verify_max_delta);
    s.number("t1_max_delta", c.tolerances.t1_max_delta);
    s.number("bmo_max_spread", c.tolerances.bmo_max_spread);
  }
  return c;
}

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  throw ConfigError("config field " + field + ": " + what);
}

}  // namespace

void validate_config(const ExperimentConfig& c) {
  if (c.schema != kExperimentSchema) bad("$.schema", "unsupported schema '" + c.schema + "'");
  const auto& g = c.grid;
  if (g.n < 1 || g.n > kMaxDim) bad("$.grid.n", "dimension must lie in 1.." + std::to_string(kMaxDim));
  if (g.m < 3) bad("$.grid.m", "need at least 3 nodes per axis");
  if (!(g.L > 0.0) || !std::isfinite(g.L)) bad("$.grid.L", "half-width must be positive");
  if (!(g.margin >= 0.0) || g.margin >= g.L) bad("$.grid.margin", "margin must lie in [0, L)");

  const auto& p = c.potential;
  static const std::set<std::string> presets = {"constant", "harmonic", "polynomial", "zero"};
  if (!presets.count(p.preset)) bad("$.potential.preset", "unknown preset '" + p.preset + "'");
  if (p.preset == "constant" && !(p.constant >= 0.0)) bad("$.potential.constant", "must be nonnegative");
  if (p.preset == "polynomial" && p.coeffs.empty()) bad("$.potential.coeffs", "polynomial preset needs coefficients");
  try {
    check_reverse_holder_exponent(g.n, p.q);
  } catch (const ContractError& e) {
    bad("$.potential.q", e.what());
  }
  if (p.dense_cap == 0) bad("$.potential.dense_cap", "must be positive");

  if (c.checks.empty()) bad("$.checks", "at least one check is required");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < c.checks.size(); ++i) {
    const auto& k = c.checks[i];
    const std::string f = "$.checks[" + std::to_string(i) + "]";
    if (std::find(known_checks().begin(), known_checks().end(), k) == known_checks().end())
      bad(f, "unknown check '" + k + "'");
    if (!seen.insert(k).second) bad(f, "duplicate check '" + k + "'");
  }
  const bool needs_ops = seen.count("t1") || seen.count("norms");
  if (needs_ops && c.operators.empty()) bad("$.operators", "the t1 and norms checks need at least one operator");
  const double d0 = delta0_of(g.n, p.q);
  for (std::size_t i = 0; i < c.operators.size(); ++i) {
    try {
      c.operators[i].validate(g.n, d0);
    } catch (const ContractError& e) {
      bad("$.operators[" + std::to_string(i) + "]", e.what());
    }
  }

  if (c.ensemble.centers_per_axis < 5) bad("$.ensemble.centers_per_axis", "need at least 5");
  if (c.ensemble.radii_per_decade < 4) bad("$.ensemble.radii_per_decade", "need at least 4");
  if (!(c.ensemble.margin >= 0.0)) bad("$.ensemble.margin", "must be nonnegative");
  if (c.probes.count < 1) bad("$.probes.count", "must be positive");
  if (!(c.probes.margin > 0.0)) bad("$.probes.margin", "must be positive");
  if (c.rho.max_rows < 1) bad("$.rho.max_rows", "must be positive");
  for (std::size_t i = 0; i < c.verify.estimates.size(); ++i) {
    try {
      estimate_from_name(c.verify.estimates[i]);
    } catch (const ContractError& e) {
      bad("$.verify.estimates[" + std::to_string(i) + "]", e.what());
    }
  }
  for (int N : c.verify.params.Ns)
    if (N < 1) bad("$.verify.Ns", "decay orders must be positive");
  for (double a : c.t1.alphas)
    if (!(a > 0.0 && a < 1.0)) bad("$.t1.alphas", "alpha must lie in (0, 1)");
  if (!(c.t1.margin > 0.0)) bad("$.t1.margin", "must be positive");
  for (double a : c.bmo.alphas)
    if (!(a > 0.0 && a <= 1.0)) bad("$.bmo.alphas", "alpha must lie in (0, 1]");
  if (c.bmo.centers < 1) bad("$.bmo.centers", "must be positive");
  if (c.bmo.scales < 2) bad("$.bmo.scales", "need at least 2 scales");
  if (!(c.bmo.min_scale > 0.0 && c.bmo.min_scale < 1.0)) bad("$.bmo.min_scale", "must lie in (0, 1)");
  for (double a : c.norms.alphas)
    if (!(a >= 0.0 && a <= 1.0)) bad("$.norms.alphas", "alpha must lie in [0, 1]");
  if (c.norms.battery < 1) bad("$.norms.battery", "must be positive");
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ConfigError("config line " + std::to_string(line) + ", column " + std::to_string(col) +
                      ": malformed JSON (" + e.what() + ")");
  }
  ExperimentConfig c = from_json(root);
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["schema"] = c.schema;
  j["seed"] = c.seed;
  j["grid"] = {{"n", c.grid.n}, {"m", c.grid.m}, {"L", c.grid.L}, {"margin", c.grid.margin}};
  j["potential"] = {{"preset", c.potential.preset},
                    {"constant", c.potential.constant},
                    {"coeffs", c.potential.coeffs},
                    {"q", exponent_json(c.potential.q)},
                    {"mode", c.potential.mode == PotentialMode::Dense ? "dense" : "separable"},
                    {"dense_cap", c.potential.dense_cap}};
  j["operators"] = json::array();
  for (const auto& d : c.operators) j["operators"].push_back(descriptor_to_json(d));
  const auto& e = c.ensemble;
  j["ensemble"] = {{"centers_per_axis", e.centers_per_axis}, {"radii_per_decade", e.radii_per_decade},
                   {"r_min_cells", e.r_min_cells},           {"r_max", e.r_max},
                   {"margin", e.margin},                     {"center_span", e.center_span},
                   {"rho_relative", e.rho_relative}};
  const auto& p = c.probes;
  j["probes"] = {{"count", p.count},           {"margin", p.margin},
                 {"tau_min", p.tau_min},       {"tau_min_free", p.tau_min_free},
                 {"max_r2_over_t", p.max_r2_over_t}, {"r_min_cells", p.r_min_cells}};
  j["rho"] = {{"max_rows", c.rho.max_rows}};
  const auto& v = c.verify.params;
  j["verify"] = {{"estimates", c.verify.estimates}, {"Ns", v.Ns},
                 {"delta", v.delta},                {"gamma", v.gamma},
                 {"omega_rate", v.omega_rate},      {"gauss_rate", v.gauss_rate},
                 {"rho_fraction", v.rho_fraction},  {"climb_starts", v.climb_starts},
                 {"climb_steps", v.climb_steps}};
  j["t1"] = {{"alphas", c.t1.alphas},
             {"doubling", c.t1.doubling},
             {"margin", c.t1.margin},
             {"sensitivity_threshold", c.t1.sensitivity_threshold}};
  j["bmo"] = {{"alphas", c.bmo.alphas}, {"centers", c.bmo.centers}, {"scales", c.bmo.scales},
              {"min_scale", c.bmo.min_scale}};
  j["norms"] = {{"alphas", c.norms.alphas}, {"battery", c.norms.battery}};
  j["checks"] = c.checks;
  j["output"] = c.output;
  j["tolerances"] = {{"verify_max_delta", c.tolerances.verify_max_delta},
                     {"t1_max_delta", c.tolerances.t1_max_delta},
                     {"bmo_max_spread", c.tolerances.bmo_max_spread}};
  return j;
}

std::string config_hash(const ExperimentConfig& c) {
  json j = config_to_json(c);
  j.erase("output");
  return hex64(fnv1a64(j.dump()));
}

Potential build_potential(const ExperimentConfig& c) {
  const Grid grid(c.grid.n, c.grid.m, c.grid.L);
  PresetSpec spec{c.potential.preset, c.potential.constant, c.potential.coeffs, c.potential.q};
  Potential sep = build_preset(grid, spec);
  if (c.potential.mode == PotentialMode::Separable) return sep;
  const std::size_t N = grid.size();
  if (N > c.potential.dense_cap)
    throw ContractError("dense cap exceeded: m^n = " + std::to_string(N) + " > " + std::to_string(c.potential.dense_cap));
  return Potential::dense(grid, sep.samples().values, c.potential.q, sep.label(), c.potential.dense_cap);
}

// ---------------------------------------------------------------------------------------------
// CSV schema

namespace {

json columns(std::initializer_list<std::pair<const char*, const char*>> cols) {
  json a = json::array();
  for (const auto& [name, doc] : cols) a.push_back({{"name", name}, {"description", doc}});
  return a;
}

}  // namespace

json csv_schema() {
  json s;
  s["schema"] = "schrolab.csv-schema/1";
  s["notes"] = "x1..xn expand to one column per dimension. Numbers use the shortest round-trip decimal form; "
               "non-finite values are written as inf, -inf or nan.";
  json f;
  f["rho.csv"] = columns({{"x1..xn", "node coordinates (strided sublattice)"},
                          {"rho", "critical radius"},
                          {"capped", "1 when every radius up to the wall was admissible"},
                          {"refined_below", "1 when the scan had to start below 2h"}});
  f["cover.csv"] = columns({{"ball", "selection order"},
                            {"x1..xn", "center coordinates"},
                            {"radius", "critical radius at the center"},
                            {"capped", "1 when the radius is capped at the wall"},
                            {"nodes_first_covered", "grid nodes whose first covering ball is this one"}});
  f["spectrum.csv"] = columns({{"axis", "axis 1..n for separable models, 0 for the dense operator"},
                               {"index", "eigenvalue index, ascending from 0"},
                               {"eigenvalue", "eigenvalue"}});
  f["bmo_sweep.csv"] = columns({{"profile", "log (alpha = 0) or power"},
                                {"alpha", "order of the norm"},
                                {"x1..xn", "profile center"},
                                {"s", "plateau radius"},
                                {"rho", "critical radius at the center"},
                                {"norm", "BMO^alpha norm over the ensemble"},
                                {"sup_oscillation", "oscillation part of the norm"},
                                {"sup_mean", "mean-size part over critical balls"}});
  f["bmo_balls_<profile>_a<alpha>.csv"] =
      columns({{"ball", "ensemble index"},
               {"x1..xn", "ball center"},
               {"radius", "ball radius"},
               {"class", "sub-critical, intermediate or critical"},
               {"rho", "critical radius at the center"},
               {"f_B", "ball mean"},
               {"oscillation", "L^p mean oscillation"},
               {"weighted_osc", "|B|^(-alpha/n) times the oscillation"},
               {"mean_abs", "L^p mean of |f|"},
               {"weighted_mean", "|B|^(-alpha/n) times mean_abs on critical balls, else 0"}});
  f["t1/op<i>_<kind>_<weight>.csv"] =
      columns({{"x1..xn", "ball center"},
               {"s", "ball radius"},
               {"rho", "critical radius at the center"},
               {"weight", "(rho/s)^alpha or log(rho/s)"},
               {"oscillation", "|B|^(-1-gamma/n) times the integral of |T1 - (T1)_B| over B"},
               {"quantity", "weight times oscillation"}});
  f["verify/<NAME>[_N<k>].csv"] = columns({{"<key columns>", "probe coordinates, listed in the report header of bundle.json"},
                                    {"measured", "left side of the inequality"},
                                    {"bound", "right side without the constant"},
                                    {"ratio", "measured / bound"}});
  f["norms.csv"] = columns({{"operator", "index in the config operator list"},
                            {"kind", "operator kind"},
                            {"alpha", "order of the source space"},
                            {"gamma", "order of the operator"},
                            {"max_ratio", "largest ||Tf|| / ||f|| over the battery"},
                            {"evaluated", "battery members with nonzero norm"},
                            {"skipped_zero", "battery members with zero norm"}});
  s["files"] = f;
  return s;
}

// ---------------------------------------------------------------------------------------------
// Runner

namespace {

using Clock = std::chrono::steady_clock;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::vector<std::string> coord_header(int n, const char* prefix = "x") {
  std::vector<std::string> h;
  for (int a = 1; a <= n; ++a) h.push_back(prefix + std::to_string(a));
  return h;
}

void append_point(std::vector<std::string>& row, const Point& p, int n) {
  for (int a = 0; a < n; ++a) row.push_back(format_number(p[a]));
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
}

json num(double v) { return std::isfinite(v) ? json(v) : json(format_number(v)); }

std::string file_token(double v) { return format_number(v); }

enum class Status { Ok, Flagged, Inconclusive, Failed };

const char* status_name(Status s) {
  switch (s) {
    case Status::Ok: return "ok";
    case Status::Flagged: return "flagged";
    case Status::Inconclusive: return "inconclusive-truncation";
    case Status::Failed: return "error";
  }
  return "?";
}

struct Context {
  const ExperimentConfig& cfg;
  std::string hash;
  fs::path out;
  RhoField rho;
  std::optional<SpectralModel> model;
  std::vector<std::string>* artifacts;
  std::ostream* log;

  const Grid& grid() const { return rho.grid(); }
  int n() const { return cfg.grid.n; }
  const SpectralModel& spectral() {
    if (!model) {
      if (log) *log << "building spectral model\n";
      model = SpectralModel::build(rho.potential(), cfg.potential.dense_cap);
    }
    return *model;
  }
  void csv(const std::string& rel, const CsvTable& t) {
    fs::create_directories((out / rel).parent_path());
    t.write(out / rel);
    artifacts->push_back(rel);
  }
  void js(const std::string& rel, json j) {
    fs::create_directories((out / rel).parent_path());
    j["config_hash"] = hash;
    write_json(out / rel, j);
    artifacts->push_back(rel);
  }
};

struct Result {
  Status status = Status::Ok;
  std::string message;
};

Result check_rho(Context& ctx) {
  const Grid& g = ctx.grid();
  const int n = ctx.n(), m = g.m();
  int stride = 1;
  while (std::pow(static_cast<double>((m + stride - 1) / stride), n) > static_cast<double>(ctx.cfg.rho.max_rows)) ++stride;
  const int count = (m + stride - 1) / stride;
  const int offset = (m - 1 - (count - 1) * stride) / 2;

  auto header = coord_header(n);
  header.insert(header.end(), {"rho", "capped", "refined_below"});
  CsvTable t(header);
  std::size_t bad = 0, capped = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  std::array<int, kMaxDim> ij{};
  std::vector<int> digit(static_cast<std::size_t>(n), 0);
  for (;;) {
    for (int a = 0; a < n; ++a) ij[static_cast<std::size_t>(a)] = offset + digit[static_cast<std::size_t>(a)] * stride;
    const std::size_t idx = g.flatten(ij);
    const RhoResult r = ctx.rho.result(idx);
    std::vector<std::string> row;
    append_point(row, g.point(idx), n);
    row.push_back(format_number(r.rho));
    row.push_back(r.capped ? "1" : "0");
    row.push_back(r.refined_below ? "1" : "0");
    t.row(std::move(row));
    if (!(std::isfinite(r.rho) && r.rho > 0.0)) ++bad;
    capped += r.capped;
    lo = std::min(lo, r.rho);
    hi = std::max(hi, r.rho);
    int a = n - 1;
    while (a >= 0 && ++digit[static_cast<std::size_t>(a)] == count) digit[static_cast<std::size_t>(a--)] = 0;
    if (a < 0) break;
  }
  ctx.csv("rho.csv", t);
  std::ostringstream msg;
  msg << t.rows() << " nodes (stride " << stride << "), rho in [" << format_number(lo) << ", " << format_number(hi)
      << "], " << capped << " capped";
  return {bad ? Status::Flagged : Status::Ok, msg.str()};
}

Result check_cover(Context& ctx) {
  const Grid& g = ctx.grid();
  const auto cover = critical_covering(ctx.rho);
  std::vector<std::size_t> first(cover.centers.size(), 0);
  for (auto b : cover.first_cover)
    if (b < first.size()) ++first[b];
  auto header = std::vector<std::string>{"ball"};
  auto coords = coord_header(ctx.n());
  header.insert(header.end(), coords.begin(), coords.end());
  header.insert(header.end(), {"radius", "capped", "nodes_first_covered"});
  CsvTable t(header);
  for (std::size_t k = 0; k < cover.centers.size(); ++k) {
    std::vector<std::string> row{std::to_string(k)};
    append_point(row, g.point(cover.centers[k]), ctx.n());
    row.push_back(format_number(cover.radii[k]));
    row.push_back(cover.capped[k] ? "1" : "0");
    row.push_back(std::to_string(first[k]));
    t.row(std::move(row));
  }
  ctx.csv("cover.csv", t);
  ctx.js("cover.json", {{"balls", cover.centers.size()}, {"overlap", cover.overlap}});
  return {Status::Ok, std::to_string(cover.centers.size()) + " balls, overlap " + std::to_string(cover.overlap)};
}

Result check_spectrum(Context& ctx) {
  const SpectralModel& M = ctx.spectral();
  CsvTable t({"axis", "index", "eigenvalue"});
  std::size_t bad = 0;
  auto emit = [&](int axis, Eigen::Index k, double v) {
    t.row({std::to_string(axis), std::to_string(k), format_number(v)});
    bad += !std::isfinite(v);
  };
  if (M.separable()) {
    for (std::size_t a = 0; a < M.axes().size(); ++a)
      for (Eigen::Index k = 0; k < M.axes()[a].lambda.size(); ++k)
        emit(static_cast<int>(a) + 1, k, M.axes()[a].lambda[k]);
  } else {
    std::vector<double> lam = M.eigenvalues();
    std::sort(lam.begin(), lam.end());
    for (std::size_t k = 0; k < lam.size(); ++k) emit(0, static_cast<Eigen::Index>(k), lam[k]);
  }
  ctx.csv("spectrum.csv", t);
  return {bad ? Status::Flagged : Status::Ok, "lambda in [" + format_number(M.lambda_min()) + ", " +
                                                  format_number(M.lambda_max()) + "]"};
}

Result check_bmo(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const Grid& g = ctx.grid();
  const int n = ctx.n();
  BallEnsemble ens = ball_ensemble(ctx.rho, cfg.ensemble);

  std::mt19937_64 rng(derive_seed(cfg.seed, 3));
  std::uniform_real_distribution<double> pos(-0.2 * g.half_width(), 0.2 * g.half_width());
  std::vector<std::size_t> centers{g.nearest(Point{})};
  while (centers.size() < static_cast<std::size_t>(cfg.bmo.centers)) {
    Point p;
    for (int a = 0; a < n; ++a) p[a] = pos(rng);
    centers.push_back(g.nearest(p));
  }
  std::vector<double> fracs;
  for (int k = 0; k < cfg.bmo.scales; ++k)
    fracs.push_back(std::pow(cfg.bmo.min_scale, 1.0 - static_cast<double>(k) / (cfg.bmo.scales - 1)));
  for (std::size_t x : centers) {
    std::vector<double> local;
    for (double f : fracs)
      for (double mult : {0.5, 1.0, 2.0}) local.push_back(mult * f * ctx.rho.at(x));
    add_balls(ens, ctx.rho, std::span<const std::size_t>(&x, 1), local);
  }

  auto header = std::vector<std::string>{"profile", "alpha"};
  auto coords = coord_header(n);
  header.insert(header.end(), coords.begin(), coords.end());
  header.insert(header.end(), {"s", "rho", "norm", "sup_oscillation", "sup_mean"});
  CsvTable sweep(header);

  std::vector<std::pair<std::string, double>> families{{"log", 0.0}};
  for (double a : cfg.bmo.alphas) families.emplace_back("power", a);

  json summary = json::array();
  Status status = Status::Ok;
  std::string worst;
  for (const auto& [profile, alpha] : families) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    bool first = true;
    for (std::size_t x : centers)
      for (double f : fracs) {
        const double r0 = ctx.rho.at(x), s = f * r0;
        const GridFunction fn = profile == "log" ? test_function_g(g, g.point(x), s, r0)
                                                 : test_function_f(g, g.point(x), s, alpha, r0);
        const auto rep = bmo_alpha_norm(fn, alpha, ens);
        std::vector<std::string> row{profile, format_number(alpha)};
        append_point(row, g.point(x), n);
        for (double v : {s, r0, rep.norm, rep.sup_oscillation, rep.sup_mean}) row.push_back(format_number(v));
        sweep.row(std::move(row));
        if (rep.norm > 0.0) {
          lo = std::min(lo, rep.norm);
          hi = std::max(hi, rep.norm);
        }
        if (first) {
          first = false;
          auto bh = std::vector<std::string>{"ball"};
          bh.insert(bh.end(), coords.begin(), coords.end());
          bh.insert(bh.end(), {"radius", "class", "rho", "f_B", "oscillation", "weighted_osc", "mean_abs", "weighted_mean"});
          CsvTable balls(bh);
          for (const auto& r : rep.rows) {
            const BallSpec& B = ens.balls[r.ball];
            std::vector<std::string> br{std::to_string(r.ball)};
            append_point(br, B.center, n);
            br.push_back(format_number(B.radius));
            br.push_back(ball_class_name(B.cls));
            for (double v : {B.rho, r.mean, r.oscillation, r.weighted_osc, r.mean_abs, r.weighted_mean})
              br.push_back(format_number(v));
            balls.row(std::move(br));
          }
          ctx.csv("bmo_balls_" + profile + "_a" + file_token(alpha) + ".csv", balls);
        }
      }
    const double spread = hi > 0.0 ? hi / lo : std::numeric_limits<double>::quiet_NaN();
    summary.push_back({{"profile", profile}, {"alpha", alpha}, {"min_norm", num(lo)}, {"max_norm", num(hi)},
                       {"spread", num(spread)}});
    if (!(spread <= cfg.tolerances.bmo_max_spread)) {
      status = Status::Flagged;
      worst += (worst.empty() ? "" : ", ") + profile + " a=" + format_number(alpha);
    }
  }
  ctx.csv("bmo_sweep.csv", sweep);
  ctx.js("bmo.json", {{"families", summary}, {"balls", ens.balls.size()}, {"max_spread", cfg.tolerances.bmo_max_spread}});
  return {status, status == Status::Ok ? std::to_string(sweep.rows()) + " profiles, spreads within tolerance"
                                       : "spread above tolerance: " + worst};
}

Result check_t1(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const Grid& g = ctx.grid();
  const int n = ctx.n();
  const SpectralModel& M = ctx.spectral();
  const BallEnsemble ens = ball_ensemble(ctx.rho, cfg.ensemble);
  std::optional<BallEnsemble> dbl;
  if (cfg.t1.doubling) dbl = ball_ensemble(ctx.rho, cfg.ensemble.doubled());
  std::vector<std::size_t> cells = subcritical_cells(ens, g);
  if (dbl) {
    const auto more = subcritical_cells(*dbl, g);
    std::vector<std::size_t> merged;
    std::set_union(cells.begin(), cells.end(), more.begin(), more.end(), std::back_inserter(merged));
    cells = std::move(merged);
  }
  const double d0 = delta0_of(n, cfg.potential.q);
  T1Options opt{cfg.t1.margin, cfg.t1.sensitivity_threshold, true};

  json entries = json::array();
  Status status = Status::Ok;
  std::string flagged;
  for (std::size_t i = 0; i < cfg.operators.size(); ++i) {
    const OperatorDescriptor& d = cfg.operators[i];
    if (ctx.log) *ctx.log << "t1: " << d.label() << "\n";
    const Operator op(d, M);
    const T1Field field = t1_field(op, opt, cells);
    const double gamma = d.gamma_order(), delta = d.delta_in_use(d0);

    struct Item {
      std::string weight;
      double alpha;
    };
    std::vector<Item> items;
    json skipped = json::array();
    if (gamma < 1.0) items.push_back({"log", 0.0});
    for (double a : cfg.t1.alphas) {
      if (a + gamma < std::min(1.0, delta))
        items.push_back({"alpha", a});
      else
        skipped.push_back({{"alpha", a}, {"reason", "alpha + gamma >= min(1, delta)"}});
    }
    json crit = json::array();
    for (const auto& it : items) {
      const auto run = [&](const BallEnsemble& e) {
        return it.weight == "log" ? criterion_log(field, gamma, e) : criterion_alpha(field, it.alpha, gamma, e);
      };
      const CriterionReport rep = run(ens);
      auto header = coord_header(n);
      header.insert(header.end(), {"s", "rho", "weight", "oscillation", "quantity"});
      CsvTable t(header);
      for (const auto& r : rep.rows) {
        std::vector<std::string> row;
        append_point(row, ens.balls[r.ball].center, n);
        for (double v : {r.s, r.rho, r.weight, r.oscillation, r.quantity}) row.push_back(format_number(v));
        t.row(std::move(row));
      }
      const std::string tag = it.weight == "log" ? "log" : "alpha" + file_token(it.alpha);
      ctx.csv("t1/op" + std::to_string(i) + "_" + op_kind_name(d.kind) + "_" + tag + ".csv", t);

      double doubled = std::numeric_limits<double>::quiet_NaN(), delta_rel = 0.0;
      if (dbl) {
        doubled = run(*dbl).supremum;
        delta_rel = relative_change(rep.supremum, doubled);
      }
      json e{{"weight", it.weight},        {"alpha", it.alpha},
             {"supremum", num(rep.supremum)}, {"doubled_supremum", num(doubled)},
             {"stability_delta", num(delta_rel)}, {"excluded_intermediate", rep.excluded_intermediate},
             {"truncation_dominated", rep.truncation_dominated}};
      crit.push_back(e);
      if (rep.truncation_dominated) {
        status = Status::Inconclusive;
      } else if (!std::isfinite(rep.supremum) || delta_rel > cfg.tolerances.t1_max_delta) {
        if (status == Status::Ok) status = Status::Flagged;
        flagged += (flagged.empty() ? "" : ", ") + d.label() + " " + tag;
      }
    }
    entries.push_back({{"operator", i},
                       {"label", d.label()},
                       {"descriptor", descriptor_to_json(d)},
                       {"gamma", gamma},
                       {"delta", delta},
                       {"margin_sensitivity", num(field.margin_sensitivity)},
                       {"truncation_dominated", field.truncation_dominated},
                       {"criteria", crit},
                       {"skipped", skipped}});
    if (field.truncation_dominated) status = Status::Inconclusive;
  }
  ctx.js("t1.json", {{"operators", entries}, {"balls", ens.balls.size()},
                     {"doubled_balls", dbl ? dbl->balls.size() : 0}, {"max_delta", cfg.tolerances.t1_max_delta}});
  std::string msg = std::to_string(cfg.operators.size()) + " operators";
  if (status == Status::Inconclusive) msg += "; truncation-dominated field present";
  if (!flagged.empty()) msg += "; flagged: " + flagged;
  return {status, msg};
}

// "HEAT_GAUSSIAN[N=2]" -> "HEAT_GAUSSIAN_N2".
std::string report_file(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (c == '[')
      s += '_';
    else if (c != ']' && c != '=')
      s += c;
  }
  return s;
}

Result check_verify(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const SpectralModel& M = ctx.spectral();
  ProbePolicy policy = cfg.probes;
  policy.seed = derive_seed(cfg.seed, 1);
  std::vector<EstimateId> ids;
  if (cfg.verify.estimates.empty())
    ids = all_estimates();
  else
    for (const auto& s : cfg.verify.estimates) ids.push_back(estimate_from_name(s));

  const EstimateVerifier ver(M, ctx.rho, cfg.verify.params);
  std::vector<VerificationReport> reports;
  for (EstimateId id : ids) {
    if (ctx.log) *ctx.log << "verify: " << estimate_name(id) << "\n";
    auto reps = ver.run(id, make_probes(id, ctx.grid(), policy));
    for (auto& r : reps) reports.push_back(std::move(r));
  }
  const Bundle b = report_bundle(std::move(reports), estimate_report_order(cfg.verify.params.Ns),
                                 cfg.tolerances.verify_max_delta);
  json list = json::array();
  for (std::size_t k = 0; k < b.reports.size(); ++k) {
    const auto& r = b.reports[k];
    ctx.csv("verify/" + report_file(r.name) + ".csv", report_table(r));
    json s = report_summary(r);
    s["key_columns"] = r.key_columns;
    s["verdict"] = verdict_name(b.verdicts[k]);
    list.push_back(s);
  }
  ctx.js("verify/bundle.json", {{"overall", verdict_name(b.overall)}, {"summary", b.summary}, {"reports", list},
                                {"max_delta", cfg.tolerances.verify_max_delta}});
  const Status st = b.overall == Verdict::Consistent ? Status::Ok
                    : b.overall == Verdict::Flagged  ? Status::Flagged
                                                     : Status::Inconclusive;
  return {st, std::to_string(b.reports.size()) + " reports; " + b.summary};
}

Result check_norms(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const SpectralModel& M = ctx.spectral();
  const BallEnsemble ens = ball_ensemble(ctx.rho, cfg.ensemble);
  CsvTable t({"operator", "kind", "alpha", "gamma", "max_ratio", "evaluated", "skipped_zero"});
  json entries = json::array();
  std::size_t bad = 0;
  for (double alpha : cfg.norms.alphas) {
    const TestBattery bat = make_battery(ctx.rho, &M, alpha, cfg.norms.battery, derive_seed(cfg.seed, 4));
    for (std::size_t i = 0; i < cfg.operators.size(); ++i) {
      const OperatorDescriptor& d = cfg.operators[i];
      const double gamma = d.gamma_order();
      if (alpha + gamma > 1.0) {
        entries.push_back({{"operator", i}, {"label", d.label()}, {"alpha", alpha}, {"skipped", "alpha + gamma > 1"}});
        continue;
      }
      if (ctx.log) *ctx.log << "norms: " << d.label() << " alpha " << alpha << "\n";
      const auto rep = empirical_operator_norm(Operator(d, M), alpha, gamma, bat, ens);
      t.row({std::to_string(i), op_kind_name(d.kind), format_number(alpha), format_number(gamma),
             format_number(rep.max_ratio), std::to_string(rep.evaluated), std::to_string(rep.skipped_zero)});
      entries.push_back({{"operator", i}, {"label", d.label()}, {"alpha", alpha}, {"max_ratio", num(rep.max_ratio)},
                         {"argmax", rep.argmax >= 0 ? json(bat.labels[static_cast<std::size_t>(rep.argmax)]) : json()}});
      bad += !std::isfinite(rep.max_ratio);
    }
  }
  ctx.csv("norms.csv", t);
  ctx.js("norms.json", {{"entries", entries}});
  return {bad ? Status::Flagged : Status::Ok, std::to_string(t.rows()) + " operator norms"};
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  RunResult res;
  const std::string started = utc_now();
  const auto t0 = Clock::now();
  const fs::path out = cfg.output;
  std::string hash;
  bool any_error = false, any_inconclusive = false, any_flagged = false;
  try {
    validate_config(cfg);
    hash = config_hash(cfg);
    fs::create_directories(out);
    Context ctx{cfg, hash, out, RhoField(build_potential(cfg)), std::nullopt, &res.artifacts, log};
    for (const auto& name : cfg.checks) {
      if (log) *log << "check " << name << "\n";
      const auto c0 = Clock::now();
      CheckOutcome oc;
      oc.check = name;
      Result r;
      try {
        if (name == "rho") r = check_rho(ctx);
        else if (name == "cover") r = check_cover(ctx);
        else if (name == "spectrum") r = check_spectrum(ctx);
        else if (name == "bmo") r = check_bmo(ctx);
        else if (name == "t1") r = check_t1(ctx);
        else if (name == "verify") r = check_verify(ctx);
        else if (name == "norms") r = check_norms(ctx);
      } catch (const std::exception& e) {
        r = {Status::Failed, e.what()};
      }
      oc.status = status_name(r.status);
      oc.message = r.message;
      oc.seconds = std::chrono::duration<double>(Clock::now() - c0).count();
      any_error |= r.status == Status::Failed;
      any_inconclusive |= r.status == Status::Inconclusive;
      any_flagged |= r.status == Status::Flagged;
      if (log) *log << "  " << oc.status << ": " << oc.message << "\n";
      res.checks.push_back(oc);
    }
  } catch (const std::exception& e) {
    any_error = true;
    res.error = e.what();
    if (log) *log << "error: " << res.error << "\n";
  }
  res.exit_code = any_error ? kExitError : any_inconclusive ? kExitInconclusive : any_flagged ? kExitFlagged : kExitOk;

  // The manifest is the only artifact carrying timestamps and wall-times.
  try {
    fs::create_directories(out);
    write_json(out / "csv_schema.json", csv_schema());
    json checks = json::array();
    for (const auto& c : res.checks)
      checks.push_back({{"check", c.check}, {"status", c.status}, {"message", c.message}, {"wall_seconds", c.seconds}});
    json manifest{{"schema", "schrolab.manifest/1"},
                  {"config_hash", hash},
                  {"version", kVersion},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"compiler", __VERSION__},
                  {"started_utc", started},
                  {"finished_utc", utc_now()},
                  {"wall_seconds", std::chrono::duration<double>(Clock::now() - t0).count()},
                  {"exit_code", res.exit_code},
                  {"error", res.error},
                  {"checks", checks},
                  {"artifacts", res.artifacts}};
    try {
      manifest["config"] = config_to_json(cfg);
    } catch (const std::exception&) {
    }
    write_json(out / "manifest.json", manifest);
  } catch (const std::exception& e) {
    if (res.error.empty()) res.error = e.what();
    res.exit_code = kExitError;
  }
  return res;
}

}  // namespace schro
