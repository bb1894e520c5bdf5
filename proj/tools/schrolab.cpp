// schrolab: batch runner for Schrödinger operator experiments.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "schro/errors.hpp"
#include "schro/experiment.hpp"
#include "schro/io.hpp"

namespace {

using namespace schro;

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string grid;
  std::string preset;
  bool quiet = false;
};

void add_common(CLI::App* sub, Overrides& o, bool config_flag = true) {
  if (config_flag) sub->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output directory (overrides the config)");
  sub->add_option("--seed", o.seed, "random seed (overrides the config)");
  sub->add_option("--grid", o.grid, "n,m,L[,margin]");
  sub->add_option("--preset", o.preset, "potential preset: constant[:c], harmonic, zero");
  sub->add_flag("-q,--quiet", o.quiet, "only print the final status");
}

std::vector<double> split_numbers(const std::string& s, const char* what) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string("--") + what + ": cannot read '" + item + "' as a number");
    }
  }
  return v;
}

void apply(ExperimentConfig& c, const Overrides& o) {
  if (!o.out.empty()) c.output = o.out;
  if (o.seed) c.seed = *o.seed;
  if (!o.grid.empty()) {
    const auto v = split_numbers(o.grid, "grid");
    if (v.size() != 3 && v.size() != 4) throw ConfigError("--grid: expected n,m,L or n,m,L,margin");
    c.grid.n = static_cast<int>(v[0]);
    c.grid.m = static_cast<int>(v[1]);
    c.grid.L = v[2];
    if (v.size() == 4) {
      c.grid.margin = c.ensemble.margin = c.probes.margin = v[3];
      c.t1.margin = 0.5 * v[3];
    }
  }
  if (!o.preset.empty()) {
    const auto colon = o.preset.find(':');
    c.potential.preset = o.preset.substr(0, colon);
    if (colon != std::string::npos) {
      const auto v = split_numbers(o.preset.substr(colon + 1), "preset");
      if (v.size() != 1) throw ConfigError("--preset: expected name or name:value");
      c.potential.constant = v[0];
    }
  }
}

// Defaults for a single-check subcommand: the config when given, otherwise a small 2D run.
ExperimentConfig config_for(const Overrides& o, const std::string& check) {
  ExperimentConfig c;
  if (!o.config.empty()) {
    c = load_config(o.config);
  } else {
    c.output = "schrolab-" + check;
    if (check == "t1" || check == "norms") c.operators = {OperatorDescriptor::heat_maximal()};
  }
  c.checks = {check};
  apply(c, o);
  validate_config(c);
  return c;
}

int execute(const ExperimentConfig& c, bool quiet) {
  std::ostream* log = quiet ? nullptr : &std::cerr;
  const RunResult r = run_experiment(c, log);
  for (const auto& oc : r.checks) std::cout << oc.check << ": " << oc.status << " (" << oc.message << ")\n";
  if (!r.error.empty()) std::cerr << "error: " << r.error << "\n";
  std::cout << "exit " << r.exit_code << ", artifacts in " << c.output << ", config hash " << config_hash(c) << "\n";
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Schrödinger operator experiments: critical radii, kernels, BMO-type norms and estimate checks"};
  app.require_subcommand(1);

  Overrides run_o;
  std::string run_positional;
  auto* run = app.add_subcommand("run", "run every check listed in a config");
  run->add_option("config_file", run_positional, "JSON experiment config")->check(CLI::ExistingFile);
  add_common(run, run_o);

  struct Single {
    const char* name;
    const char* check;
    const char* help;
  };
  const Single singles[] = {
      {"rho", "rho", "critical radius on a strided sublattice"},
      {"cover", "cover", "greedy covering by critical balls"},
      {"spectrum", "spectrum", "eigenvalues of the discrete operator"},
      {"t1-check", "t1", "T1 oscillation criteria for the configured operators"},
      {"verify", "verify", "kernel estimate bundle"},
      {"bmo-norm", "bmo", "norms of extremal profiles across centers and scales"},
      {"op-norm", "norms", "empirical operator norms on a test battery"},
  };
  std::vector<Overrides> single_o(std::size(singles));
  std::vector<CLI::App*> single_apps;
  for (std::size_t k = 0; k < std::size(singles); ++k) {
    single_apps.push_back(app.add_subcommand(singles[k].name, singles[k].help));
    add_common(single_apps.back(), single_o[k]);
  }

  auto* schema = app.add_subcommand("schema", "print the CSV column documentation");
  Overrides cfg_o;
  auto* show = app.add_subcommand("config", "print the normalized config (defaults filled in)");
  add_common(show, cfg_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (run_positional.empty() && run_o.config.empty()) throw ConfigError("run: a config file is required");
      ExperimentConfig c = load_config(run_positional.empty() ? run_o.config : run_positional);
      apply(c, run_o);
      validate_config(c);
      return execute(c, run_o.quiet);
    }
    for (std::size_t k = 0; k < single_apps.size(); ++k)
      if (*single_apps[k]) return execute(config_for(single_o[k], singles[k].check), single_o[k].quiet);
    if (*schema) {
      std::cout << csv_schema().dump(2) << "\n";
      return 0;
    }
    if (*show) {
      ExperimentConfig c = cfg_o.config.empty() ? ExperimentConfig{} : load_config(cfg_o.config);
      if (c.checks.empty()) c.checks = {"rho"};
      apply(c, cfg_o);
      validate_config(c);
      std::cout << config_to_json(c).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
