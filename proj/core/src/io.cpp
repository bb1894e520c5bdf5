#include "schro/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "schro/errors.hpp"

namespace schro {

using nlohmann::json;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row(std::vector<std::string> cells) {
  if (cells.size() != header_.size())
    throw ContractError("csv row has " + std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(header_.size()));
  rows_.push_back(std::move(cells));
  return *this;
}

CsvTable& CsvTable::row_numbers(const std::vector<double>& cells) {
  std::vector<std::string> s;
  s.reserve(cells.size());
  for (double v : cells) s.push_back(format_number(v));
  return row(std::move(s));
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) out += ',';
      const std::string& c = cells[k];
      if (c.find_first_of(",\"\n") == std::string::npos) {
        out += c;
        continue;
      }
      out += '"';
      for (char ch : c) {
        if (ch == '"') out += '"';
        out += ch;
      }
      out += '"';
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

void CsvTable::write(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << str();
  if (!os) throw Error("write failed: " + path.string());
}

CsvTable report_table(const VerificationReport& rep) {
  std::vector<std::string> header = rep.key_columns;
  header.insert(header.end(), {"measured", "bound", "ratio"});
  CsvTable t(header);
  for (const auto& r : rep.records) {
    std::vector<double> cells = r.key;
    cells.resize(rep.key_columns.size(), std::nan(""));
    cells.insert(cells.end(), {r.measured, r.bound, r.ratio});
    t.row_numbers(cells);
  }
  return t;
}

namespace {

// JSON has no inf/nan; those travel as strings.
json num(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

}  // namespace

json report_summary(const VerificationReport& rep) {
  json j;
  j["name"] = rep.name;
  j["header"] = rep.header;
  j["constant"] = num(rep.constant);
  j["argmax"] = rep.argmax;
  j["evaluated"] = rep.evaluated;
  j["excluded_constraint"] = rep.excluded_constraint;
  j["excluded_zero_bound"] = rep.excluded_zero_bound;
  j["degenerate"] = rep.degenerate;
  j["stability_delta"] = num(rep.stability_delta);
  j["truncation_dominated"] = rep.truncation_dominated;
  j["finite"] = rep.finite();
  json extras = json::object();
  for (const auto& [k, v] : rep.extras) extras[k] = num(v);
  j["extras"] = extras;
  return j;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  auto res = std::to_chars(buf, buf + 16, v, 16);
  std::string s(buf, res.ptr);
  return std::string(16 - s.size(), '0') + s;
}

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ContractError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ContractError(where + "." + k + ": unknown key");
}

double get_number(const json& j, const char* key, const std::string& where, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ContractError(where + "." + key + ": expected a number");
  return v.get<double>();
}

int get_int(const json& j, const char* key, const std::string& where, int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ContractError(where + "." + key + ": expected an integer");
  return v.get<int>();
}

std::vector<double> get_array(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return {};
  const json& v = j.at(key);
  if (!v.is_array()) throw ContractError(where + "." + key + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!v[k].is_number())
      throw ContractError(where + "." + key + "[" + std::to_string(k) + "]: expected a number");
    out.push_back(v[k].get<double>());
  }
  return out;
}

LaplaceSymbol::Tag tag_from_name(const std::string& s, const std::string& where) {
  for (auto t : {LaplaceSymbol::Tag::Constant, LaplaceSymbol::Tag::Exponential, LaplaceSymbol::Tag::Window,
                 LaplaceSymbol::Tag::Sampled})
    if (s == laplace_tag_name(t)) return t;
  throw ContractError(where + ": unknown symbol tag '" + s + "'");
}

LaplaceSymbol symbol_from_json(const json& j, const std::string& where) {
  check_keys(j, where, {"tag", "A", "b", "T", "ts", "as"});
  if (!j.contains("tag") || !j.at("tag").is_string()) throw ContractError(where + ".tag: expected a string");
  const auto tag = tag_from_name(j.at("tag").get<std::string>(), where + ".tag");
  const double A = get_number(j, "A", where, 1.0);
  try {
    switch (tag) {
      case LaplaceSymbol::Tag::Constant: return LaplaceSymbol::constant(A);
      case LaplaceSymbol::Tag::Exponential: return LaplaceSymbol::exponential(A, get_number(j, "b", where, 1.0));
      case LaplaceSymbol::Tag::Window: return LaplaceSymbol::window_on(A, get_number(j, "T", where, 1.0));
      case LaplaceSymbol::Tag::Sampled:
        return LaplaceSymbol::sampled(get_array(j, "ts", where), get_array(j, "as", where));
    }
  } catch (const ContractError& e) {
    throw ContractError(where + ": " + e.what());
  }
  return {};
}

}  // namespace

OperatorDescriptor descriptor_from_json(const json& j, const std::string& where) {
  check_keys(j, where, {"kind", "t", "sigma", "gamma", "axis", "symbol", "t_count", "quad_step", "p", "delta"});
  if (!j.contains("kind") || !j.at("kind").is_string()) throw ContractError(where + ".kind: expected a string");
  OperatorDescriptor d;
  try {
    d.kind = op_kind_from_name(j.at("kind").get<std::string>());
  } catch (const ContractError& e) {
    throw ContractError(where + ".kind: " + e.what());
  }
  d.t = get_number(j, "t", where, d.t);
  d.sigma = get_number(j, "sigma", where, d.sigma);
  d.gamma = get_number(j, "gamma", where, d.gamma);
  // Axes are 1-based in configs.
  d.axis = get_int(j, "axis", where, d.axis + 1) - 1;
  if (j.contains("symbol")) d.symbol = symbol_from_json(j.at("symbol"), where + ".symbol");
  d.t_count = get_int(j, "t_count", where, d.t_count);
  d.quad_step = get_number(j, "quad_step", where, d.quad_step);
  d.p = get_number(j, "p", where, d.p);
  d.delta = get_number(j, "delta", where, d.delta);
  return d;
}

json descriptor_to_json(const OperatorDescriptor& d) {
  json j;
  j["kind"] = op_kind_name(d.kind);
  switch (d.kind) {
    case OpKind::HeatAtT: j["t"] = d.t; break;
    case OpKind::PoissonAtT:
      j["sigma"] = d.sigma;
      j["t"] = d.t;
      break;
    case OpKind::HeatMaximal: j["t_count"] = d.t_count; break;
    case OpKind::PoissonMaximal:
      j["sigma"] = d.sigma;
      j["t_count"] = d.t_count;
      break;
    case OpKind::GHeat:
    case OpKind::GPoisson: j["quad_step"] = d.quad_step; break;
    case OpKind::LaplaceMultiplier: {
      json s;
      s["tag"] = laplace_tag_name(d.symbol.tag);
      s["A"] = d.symbol.amplitude;
      if (d.symbol.tag == LaplaceSymbol::Tag::Exponential) s["b"] = d.symbol.rate;
      if (d.symbol.tag == LaplaceSymbol::Tag::Window) s["T"] = d.symbol.window;
      if (d.symbol.tag == LaplaceSymbol::Tag::Sampled) {
        s.erase("A");
        s["ts"] = d.symbol.ts;
        s["as"] = d.symbol.as;
      }
      j["symbol"] = s;
      break;
    }
    case OpKind::RieszComponent: j["axis"] = d.axis + 1; break;
    case OpKind::NegativePower: j["gamma"] = d.gamma; break;
    case OpKind::Identity: break;
  }
  j["p"] = d.p;
  if (d.delta != 0.0) j["delta"] = d.delta;
  return j;
}

}  // namespace schro
