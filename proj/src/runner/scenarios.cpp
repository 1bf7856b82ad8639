// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/runner/scenarios.hpp"

#include <algorithm>
#include <cstdlib>

#include <fmt/format.h>

#include "deft/error.hpp"
#include "deft/runner/config.hpp"

namespace deft::runner {

std::filesystem::path scenario_dir() {
  if (const char* env = std::getenv("DEFT_SCENARIO_DIR"); env && *env) return env;
  return DEFT_BUILTIN_SCENARIO_DIR;
}

std::vector<ScenarioInfo> list_scenarios(const std::filesystem::path& dir) {
  std::vector<ScenarioInfo> out;
  if (!std::filesystem::is_directory(dir)) throw ConfigError(fmt::format("{}: no scenario directory", dir.string()));
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".yaml") continue;
    const RunConfig cfg = load_config(entry.path().string());
    out.push_back({entry.path().stem().string(), cfg.description, entry.path()});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

std::filesystem::path resolve_scenario(const std::string& name_or_path, const std::filesystem::path& dir) {
  if (std::filesystem::is_regular_file(name_or_path)) return name_or_path;
  const auto candidate = dir / (name_or_path + ".yaml");
  if (std::filesystem::is_regular_file(candidate)) return candidate;
  throw ConfigError(fmt::format("{}: no such configuration file or scenario", name_or_path));
}

}  // namespace deft::runner
