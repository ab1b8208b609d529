#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace sls {

inline constexpr const char* kHarnessVersion = "slscert 0.1.0";

// One experiment run: a command name, its model payload, seeds, the deviation
// exponent x, and a tolerance map. Loaded from a json config file; unknown
// keys are rejected so typos fail loudly instead of silently using defaults.
struct ExperimentConfig {
  std::string command;
  nlohmann::json model_spec;
  std::vector<std::uint64_t> seeds{1};
  double x = 3.0;
  std::string output_dir = "runs/out";
  nlohmann::json tolerances = nlohmann::json::object();

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load_file(const std::string& path);
  nlohmann::json to_json() const;

  double tol(const std::string& name, double fallback) const;
};

// exit_code: 0 all certified bounds hold, 2 a bound or flag was violated,
// 1 configuration or runtime error. `report` mirrors report.json.
struct RunResult {
  int exit_code = 0;
  nlohmann::json report;
  std::vector<std::string> files;
};

// Runs the command, writes report.json, manifest.json and tables/*.csv under
// cfg.output_dir. Never throws for certificate violations (exit_code 2);
// throws std::runtime_error / std::invalid_argument for config errors.
RunResult run(const ExperimentConfig& cfg);

struct DiffEntry {
  std::string path;  // json pointer into report.json
  double a = 0.0;
  double b = 0.0;
  std::string severity;  // "negligible" (<=1e-12 rel), "small" (<=1e-6), "large"
};

struct DiffReport {
  bool identical_bytes = false;
  bool version_match = true;
  std::string note;
  std::vector<DiffEntry> numeric;
  std::vector<std::string> structural;  // missing paths, type changes, bool flips
};

// Field-wise comparison of two run directories. Throws if either report is
// missing or the manifests record different commands.
DiffReport compare_runs(const std::string& dir_a, const std::string& dir_b);

// Worker count from SLSCERT_THREADS (default 1). Parallel loops write into
// per-index slots, so results do not depend on the thread count.
int thread_count();
void parallel_for(int n, const std::function<void(int)>& body);

}  // namespace sls
