#pragma once

#include <string>
#include <vector>

#include "rare/config.hpp"

namespace rare {

inline const std::vector<std::string> kSubcommands = {"trace", "train-avf", "search", "estimate", "curve", "select"};

/// Runs one pipeline stage, writing its outputs and manifest_<name>.json into
/// config.out. Outputs are a pure function of the resolved config.
RunManifest run_subcommand(const std::string& name, const ExperimentConfig& config);

}  // namespace rare
