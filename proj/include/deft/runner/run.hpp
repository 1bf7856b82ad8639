// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deft/protocols/common.hpp"
#include "deft/runner/config.hpp"
#include "deft/runner/metrics.hpp"

namespace deft::runner {

// Scheme names: single-device split "deft" and "centralized"; federated and
// D2D one per link ("digital", "aircomp"); FlyBoosting "flyboost".
struct SchemeResult {
  std::string scheme;
  double comm_seconds = 0.0;
  double compute_seconds = 0.0;
  double final_precision = 0.0;
  std::vector<double> epoch_precision;
  std::vector<double> epoch_cum_comm;
  std::vector<std::vector<protocols::RoundTrace>> traces;  // one list per replicate
  nlohmann::json details;                                   // ledger phases, payloads, protocol extras
};

struct PointResult {
  std::vector<SchemeResult> schemes;
};

// Runs one configuration (its sweep, if any, is ignored). Writes nothing.
PointResult execute(const RunConfig& cfg);

struct RunOutput {
  MetricsFrame frame;
  std::filesystem::path directory;
};

// DEFT_OUTPUT_ROOT, or "deft-out" in the working directory.
std::filesystem::path output_root();

// Executes cfg (one row, or one per value of cfg.sweep) and writes under
// root / cfg.output_dir:
//   config.yaml   the normalised configuration
//   metrics.csv   the frame
//   summary.json and <scheme>.trace.jsonl per point (in point_NNN/ for
//   sweeps; <scheme>.rK.trace.jsonl when a scheme has several replicates)
RunOutput run(const RunConfig& cfg, const std::filesystem::path& root);

// Like run with cfg.sweep replaced by (axis, values). An empty value list
// gives a frame with a header and no rows.
RunOutput sweep(const RunConfig& cfg, const std::string& axis, const std::vector<double>& values,
                const std::filesystem::path& root);

}  // namespace deft::runner
