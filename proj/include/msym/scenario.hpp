#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msym/fields.hpp"
#include "msym/integrator.hpp"
#include "msym/material.hpp"

namespace msym {

struct MetricSpec {
  std::string kind = "euclidean";  // euclidean | polar | conformal_constant | table
  double c = 1.0;
  std::string path;
};

struct EnergySpec {
  std::string kind = "constant";  // constant | barotropic_quadratic | barotropic_log | stvenant | neohookean
  double value = 0.0;
  double k = 1.0;
  double lame_lambda = 1.0;
  double lame_mu = 1.0;
};

struct ScenarioConfig {
  std::string scenario;  // elastic_bar_1d | barotropic_gas_2d | incompressible_2d | metric_check_polar | custom

  double rho = 1.0;
  EnergySpec energy;
  MetricSpec metric_G, metric_g;
  bool incompressible = false;

  std::vector<int> nodes;
  std::vector<double> lo, hi;
  std::vector<BoundaryKind> boundary;
  double dt = 0.01;

  std::string profile = "rest";  // rest | sine | perturbed | taylor_green | uniform_flow
  double amplitude = 0.0;
  double velocity = 0.0;

  SolverSettings solver;

  long n_steps = 0;
  bool constrained = false;
  long diagnostics_cadence = 1;
  long snapshot_cadence = 0;  // 0: first and last level only

  int samples = 100;
  unsigned seed = 1;
  std::string output_dir = "msym_out";
};

/// Parse a JSON configuration. Unknown keys and out-of-range values raise ConfigError.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Uniform refinement: k times more cells per axis, dt / k, n_steps * k.
ScenarioConfig refined(const ScenarioConfig& cfg, int k);

struct Scenario {
  MaterialModel model;
  SpaceTimeGrid grid;
  ConfigurationField initial;
  bool constrained = false;
};

Scenario build_scenario(const ScenarioConfig& cfg);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct VerifyReport {
  std::string scenario;
  std::vector<CheckResult> checks;
  bool all_pass() const;
};

VerifyReport run_verify(const ScenarioConfig& cfg);

struct RunOutcome {
  int exit_code = 0;
  long steps_done = 0;
  std::optional<long> failed_step;
  std::string message;
  double max_constraint = 0.0;
};

/// Integrate and write report.json, manifest.json, conservation.json and
/// snapshots/level_<k>.csv under out_dir.
RunOutcome run_scenario(const ScenarioConfig& cfg, const std::filesystem::path& out_dir);

void write_verify_report(const VerifyReport& report, const std::filesystem::path& out_dir);

}  // namespace msym
