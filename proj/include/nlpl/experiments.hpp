#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nlpl/config.hpp"

namespace nlpl {

struct RunOverrides {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

struct RunReport {
  std::vector<std::string> files;
  std::vector<std::string> warnings;
  Json summary;
};

// Each command writes its files into cfg.output_dir.
RunReport cmd_eigen(const ExperimentConfig& cfg);       // sweep.csv, summary.json
RunReport cmd_minimizers(const ExperimentConfig& cfg);  // convergence.csv, summary.json
RunReport cmd_evolve(const ExperimentConfig& cfg);      // trajectory.csv, decay.json
RunReport cmd_pinf(const ExperimentConfig& cfg);        // pinf.csv, staircase.csv, summary.json

/// Parses the config, applies the overrides, echoes effective_config.json and
/// dispatches on eigen | minimizers | evolve | pinf.
RunReport run_command(const std::string& command, const std::string& config_text, const RunOverrides& overrides);

}  // namespace nlpl
