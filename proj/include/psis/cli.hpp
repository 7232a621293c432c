#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "psis/config.hpp"

namespace psis {

enum ExitCode : int {
  kExitPass = 0,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitVerifyFail = 4,
};

struct CliOptions {
  std::string command;  // synthesize | simulate | verify | sweep
  std::string config_path;
  std::optional<std::vector<double>> scales;
  std::optional<IntegrationMode> mode;
  bool no_clobber = false;
  bool timestamp = true;
};

/// "0.1,1,10" -> {0.1, 1, 10}; throws ConfigError on junk.
std::vector<double> parse_scales(const std::string& text);

/// FNV-1a of the effective config, as 16 hex digits.
std::string run_id(const ExperimentConfig& cfg);

int cmd_synthesize(const CliOptions& opt, std::ostream& out, std::ostream& err);
int cmd_simulate(const CliOptions& opt, std::ostream& out, std::ostream& err);
int cmd_verify(const CliOptions& opt, std::ostream& out, std::ostream& err);
int cmd_sweep(const CliOptions& opt, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches. Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace psis
