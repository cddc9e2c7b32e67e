#pragma once

#include <string>
#include <vector>

#include "hkt/deformation.hpp"
#include "hkt/hyperholomorphic.hpp"

namespace hkt {

inline constexpr int kReportSchemaVersion = 1;

// Experiment names accepted as CLI subcommands, in catalog order.
const std::vector<std::string>& experiment_names();

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 1;
  int rank = 1;
  int cutoff = 2;
  nlohmann::json connection = {{"kind", "zero"}};
  bool allow_truncation = false;
  double tol_scale = 1.0;
  int samples = -1;     // -1: experiment default
  int structures = 5;   // random induced structures added to I, J, K where used
  nlohmann::json params = nlohmann::json::object();

  // Throws ConfigInvalid on unknown keys, wrong types or out-of-range values.
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Throws ConfigInvalid for bad connection specs.
HermitianConnection build_connection(const ExperimentConfig& cfg);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  std::string relation = "<=";  // value relation tolerance
  bool applicable = true;       // false: recorded but not evaluated
  bool passed = true;
  std::string note;
  nlohmann::json to_json() const;
};

// An extra output file produced by an experiment.
struct Artifact {
  std::string file;
  std::string content;
};

struct ExperimentReport {
  std::string experiment;
  nlohmann::json config;
  nlohmann::json result = nlohmann::json::object();
  std::vector<CheckResult> checks;
  std::vector<nlohmann::json> errors;  // {kind, message}
  std::vector<Artifact> artifacts;

  std::string status() const;  // "pass", "fail" or "error"
  int exit_code() const;       // 0, 2, 1
  nlohmann::json to_json() const;
};

// Module errors are caught and recorded in the report.
ExperimentReport run_experiment(const ExperimentConfig& cfg, int threads = 1);

struct CatalogEntry {
  std::string name;
  std::string experiment;
  double tolerance = 0.0;
  std::string relation;
  std::string description;
};
const std::vector<CatalogEntry>& check_catalog();

// HKT_THREADS if set (throws ConfigInvalid unless a positive integer), else
// the hardware concurrency capped at 8.
int thread_count_from_env();

}  // namespace hkt
