// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace deft::runner {

struct ScenarioInfo {
  std::string name;
  std::string description;
  std::filesystem::path path;
};

// DEFT_SCENARIO_DIR, or the scenarios/ directory of the source tree.
std::filesystem::path scenario_dir();

// Every *.yaml in dir, sorted by name. Files that fail to parse are
// reported as ConfigError.
std::vector<ScenarioInfo> list_scenarios(const std::filesystem::path& dir);

// A path to an existing file is returned as is; otherwise `name` is looked
// up as <dir>/<name>.yaml. Throws ConfigError when neither exists.
std::filesystem::path resolve_scenario(const std::string& name_or_path, const std::filesystem::path& dir);

}  // namespace deft::runner
