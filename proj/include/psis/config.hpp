#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "psis/simulation.hpp"
#include "psis/synthesis.hpp"

namespace psis {

struct VerifySettings {
  double tol_abs = 1e-4;
  double tol_rel = 1e-6;
  double window_factor = 0.9;
  double spread_bound = 0.05;  // fraction of T_p
  std::vector<double> scales{1.0};
  /// Self-test: hold u at zero so the verifier has to reject the run.
  bool force_zero_control = false;
};

struct OutputPaths {
  std::string csv;
  std::string svg;
  std::string report;
};

struct ExperimentConfig {
  PlantModel plant = IntegratorChain{1};
  SynthesisConfig synthesis;
  SimConfig sim;
  VerifySettings verify;
  OutputPaths output;
};

/// Parses and validates. `stem` names the default output files.
/// Unknown keys and any invariant violation throw ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& stem = "psis");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Effective configuration with every default filled in.
nlohmann::ordered_json emit_config(const ExperimentConfig& cfg);

/// Re-checks the cross-section invariants (orders, dimensions, T_p).
void validate(const ExperimentConfig& cfg);

}  // namespace psis
