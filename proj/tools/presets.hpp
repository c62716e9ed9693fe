#pragma once

// Built-in configurations: one per hyperparameter-table row plus the chaos and
// cylinder setups. Each preset fills the [model], [train] and [data] sections;
// generation presets fill [generate] and [cfd].

#include <string>
#include <vector>

#include "flowmixer/config.hpp"

namespace flowmixer::cli {

std::vector<std::string> preset_names();
bool has_preset(const std::string& name);
/// Throws ConfigError for unknown names.
Config preset(const std::string& name);

}  // namespace flowmixer::cli
