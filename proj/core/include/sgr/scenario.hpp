#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgr/dynamics.hpp"
#include "sgr/estimator.hpp"
#include "sgr/oracle.hpp"

namespace sgr {

enum class BarrierMode { fixed, optimize };

/// A parsed and fully validated scenario file.
struct ScenarioConfig {
  std::string name;
  CoordinationModel model;
  BarrierMode barrier_mode = BarrierMode::fixed;
  EstimatorOptions estimator;
  SimParams sim;
  OracleOptions oracle;
  int oracle_samples = 10000;
  int oracle_sim_subset = 50;
  GridSpec grid;
  bool has_grid = false;
  std::string output_dir = "out";
  std::uint64_t seed = 0;  ///< derived from the file content unless overridden
  std::string raw_json;   ///< the parsed source, kept for sweep overrides
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, std::string>> sweep;  ///< name -> override json
  /// Slice defaults (overridable on the command line).
  int slice_agent = 0;
  int slice_dim_a = 0;
  int slice_dim_b = 1;
  bool slice_fix_at_initial = false;
};

/// Loads, parses and validates a scenario file. Throws ConfigError with the
/// offending field or rule named.
ScenarioConfig parse_scenario(const std::string& path);
ScenarioConfig parse_scenario_text(const std::string& text, const std::string& origin = "<text>");

/// FNV-1a over the canonical serialized config; the default sampling seed.
std::uint64_t scenario_hash(const std::string& canonical_text);

}  // namespace sgr
