// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deft/nn/transformer.hpp"
#include "deft/protocols/d2d.hpp"
#include "deft/protocols/federated.hpp"
#include "deft/protocols/flyboost.hpp"
#include "deft/protocols/split.hpp"
#include "deft/tasks/pretrain.hpp"
#include "deft/tasks/world.hpp"

namespace deft::runner {

inline constexpr int kConfigVersion = 1;

struct TaskSpec {
  std::uint64_t seed = 1;
  std::size_t relations = 12;
  std::size_t family = 0;
  std::size_t examples_per_relation = 5;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

enum class ProtocolKind { SingleDeviceSplit, FederatedEmulator, FederatedServerAssisted, FlyBoost, D2DTransfer };

const char* to_string(ProtocolKind k);

struct SplitProtocol {
  protocols::SingleDeviceConfig config;
  bool centralized_baseline = true;
};

struct FederatedProtocol {
  protocols::FederatedConfig config;
  std::vector<protocols::LinkKind> links{protocols::LinkKind::Digital};
};

struct FlyBoostProtocol {
  protocols::FlyBoostConfig config;
  std::vector<TaskSpec> tasks;  // one per device
};

// Target task seed is seed * 100 + 99 (family config.target_family); each
// replicate r in [0, replicates) reruns everything with seed + r.
struct D2DProtocol {
  protocols::D2DConfig config;
  std::vector<protocols::LinkKind> links{protocols::LinkKind::Digital, protocols::LinkKind::AirComp};
  std::size_t replicates = 1;
};

struct SweepSpec {
  std::string axis;
  std::vector<double> values;
};

// Only the section of the selected protocol is read or written. Protocol
// seeds are not part of the sections: every run uses `seed`.
struct RunConfig {
  int config_version = kConfigVersion;
  std::string name = "run";
  std::string description;
  std::uint64_t seed = 1;
  nn::TransformerConfig model;
  std::uint64_t model_seed = 1;
  tasks::WorldConfig world;
  tasks::PretrainConfig pretrain;
  TaskSpec task;
  ProtocolKind protocol = ProtocolKind::SingleDeviceSplit;
  SplitProtocol split;
  FederatedProtocol federated;
  FlyBoostProtocol flyboost;
  D2DProtocol d2d;
  std::optional<SweepSpec> sweep;
  std::string output_dir;  // relative to the output root; defaults to name
};

// Throws ConfigError with "<source>:<line>: <key path>: message".
RunConfig parse_config(std::string_view text, std::string_view source = "<config>");
RunConfig load_config(const std::string& path);

// Complete YAML document with every field spelled out; parse_config of the
// result reproduces the same document.
std::string to_yaml(const RunConfig& cfg);

// Key paths in the YAML document that a sweep axis sets. `snr_db` and
// `epochs` are shorthands resolved per protocol; anything else must be a
// dotted path to an existing scalar. Throws UsageError for unknown axes.
std::vector<std::string> resolve_axis(const RunConfig& cfg, const std::string& axis);

// Column name used for an axis in metrics frames.
std::string axis_column(const std::string& axis);

// Copy of cfg with every resolved path set to value and the sweep removed.
RunConfig with_axis_value(const RunConfig& cfg, const std::string& axis, double value);

}  // namespace deft::runner
