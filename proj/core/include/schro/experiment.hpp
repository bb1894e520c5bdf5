#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "schro/bmo.hpp"
#include "schro/operators.hpp"
#include "schro/potential.hpp"
#include "schro/verify.hpp"

namespace schro {

inline constexpr const char* kExperimentSchema = "schrolab.experiment/1";
inline constexpr const char* kVersion = "0.1.0";

struct GridConfig {
  int n = 2;
  int m = 64;
  double L = 4.0;
  double margin = 1.0;
};

struct PotentialConfig {
  std::string preset = "constant";
  double constant = 1.0;
  std::vector<double> coeffs;
  double q = kInfiniteQ;
  PotentialMode mode = PotentialMode::Separable;
  std::size_t dense_cap = kDefaultDenseCap;
};

struct RhoConfig {
  std::size_t max_rows = 4096;   // the rho CSV covers a strided sublattice of at most this many nodes
};

struct T1Config {
  std::vector<double> alphas = {0.25, 0.5};
  bool doubling = true;          // recompute the suprema on the doubled ensemble
  double margin = 0.5;           // defaults to half the grid margin
  double sensitivity_threshold = 0.05;
};

struct VerifyConfig {
  std::vector<std::string> estimates;  // empty: all
  VerifyParams params;
};

/// Norms of the extremal log and power profiles over a sweep of centers and scales.
struct BmoConfig {
  std::vector<double> alphas = {0.25, 0.5};
  int centers = 5;
  int scales = 10;
  double min_scale = 1e-2;       // smallest s / rho(x0)
};

/// Empirical operator norms over a test battery.
struct NormsConfig {
  std::vector<double> alphas = {0.25};
  int battery = 2;
};

struct Tolerances {
  double verify_max_delta = 0.25;
  double t1_max_delta = 0.2;
  double bmo_max_spread = 10.0;
};

struct ExperimentConfig {
  std::string schema = kExperimentSchema;
  std::uint64_t seed = 1;
  GridConfig grid;
  PotentialConfig potential;
  std::vector<OperatorDescriptor> operators;
  EnsemblePolicy ensemble;
  ProbePolicy probes;
  RhoConfig rho;
  VerifyConfig verify;
  T1Config t1;
  BmoConfig bmo;
  NormsConfig norms;
  std::vector<std::string> checks;   // rho | cover | spectrum | bmo | t1 | verify | norms
  std::string output = "schrolab-out";
  Tolerances tolerances;

  ExperimentConfig() { ensemble.margin = grid.margin; }
};

const std::vector<std::string>& known_checks();

/// Parses and validates a JSON config. Syntax errors report line and column; schema errors
/// report the field path. Throws ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Range and consistency checks; used again after command-line overrides.
void validate_config(const ExperimentConfig& cfg);
/// Normalized form: every field present, defaults filled in.
nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// FNV-1a of the normalized config dump without the output directory, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Independent stream seeds from the single config seed (splitmix64 of seed + stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

Potential build_potential(const ExperimentConfig& cfg);

/// Column documentation for every CSV the runner writes.
nlohmann::json csv_schema();

enum ExitCode { kExitOk = 0, kExitError = 1, kExitInconclusive = 2, kExitFlagged = 3 };

struct CheckOutcome {
  std::string check;
  std::string status;   // "ok", "flagged", "inconclusive-truncation", "error"
  std::string message;
  double seconds = 0.0;
};

struct RunResult {
  int exit_code = kExitOk;
  std::vector<CheckOutcome> checks;
  std::vector<std::string> artifacts;   // paths relative to the output directory
  std::string error;
};

/// Builds the model, runs the requested checks in order and writes the artifacts plus
/// manifest.json and csv_schema.json. Errors are caught and reported through the exit code.
RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

}  // namespace schro
