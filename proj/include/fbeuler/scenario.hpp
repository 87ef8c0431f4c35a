#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fbeuler {

// Batch scenario configuration.  Flags override the config file field-wise;
// T is capped at 1 to match the standing smallness assumption of the time
// estimates.
struct ScenarioConfig {
  std::string scenario;  // check-operators | solve-enthalpy | linearize |
                         // invert | nash-moser | gen-data | smooth-axioms
  int n = 2;
  int n_radial = 33;
  int n_angular = 64;
  double T = 0.05;
  double dt = 1e-3;
  std::string e_function = "linear";  // linear | tanh
  double e_coefficient = 1.0;
  double c0_target = 0.5;
  double c1_target = 4.0;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string toy = "quadratic";  // nash-moser scenario toy id
  int jet_order = 6;

  static const std::vector<std::string>& allowed_scenarios();
};

// Parses and validates; throws ConfigInvalid listing every violation.
ScenarioConfig parse_config(const std::string& path);
ScenarioConfig config_from_json_text(const std::string& text);
void validate_config(const ScenarioConfig& cfg);

// Runs the scenario, writing a manifest before heavy work plus scenario
// reports.  Returns the process exit code (0 pass, 1 check failure).
int run_scenario(const ScenarioConfig& cfg);

// small CSV writer with fixed 17-significant-digit formatting
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

std::string iso8601_now();

}  // namespace fbeuler
