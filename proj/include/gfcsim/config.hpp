#pragma once

// JSON configuration files: topologies, scenarios, load sweeps and training
// runs. Every loader throws Error(kConfig) naming the offending key, and
// Error(kIo) if the file cannot be read. The schemas are documented in the
// README.

#include "gfcsim/harness.hpp"
#include "gfcsim/network.hpp"
#include "gfcsim/pinn.hpp"

#include <string>

namespace gfc {

// A topology document: "default" or a full description of buses, branches,
// loads, breakers, grid, GFCs and optional converter/gains overrides.
NetworkModel parse_topology(const std::string& json_text);
NetworkModel load_topology(const std::string& path);
std::string topology_to_json(const NetworkModel& model);

// Relative topology and model paths are resolved against base_dir.
ScenarioSpec parse_scenario(const std::string& json_text, const std::string& base_dir = ".");
ScenarioSpec load_scenario(const std::string& path);

SweepConfig parse_sweep(const std::string& json_text, const std::string& base_dir = ".");
SweepConfig load_sweep(const std::string& path);

TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);

}  // namespace gfc
