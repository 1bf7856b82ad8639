// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "deft/protocols/common.hpp"
#include "deft/tasks/cloze.hpp"

namespace deft::protocols {

// Best-of-ensemble answers: a blank counts as filled when any prompt's
// argmax at the mask equals the ground truth. One entry per slot, paths in
// order. Throws InputError for an empty ensemble or path set.
std::vector<bool> ensemble_hits(const nn::TinyTransformer& model, std::span<const nn::Tensor> prompts,
                                std::span<const tasks::ReasoningPath> paths);

// Local-effectiveness score: fraction of blanks filled correctly.
double flyboost_score(const nn::TinyTransformer& model, std::span<const nn::Tensor> prompts,
                      std::span<const tasks::ReasoningPath> paths);

// Device priority, highest first: weight / max(score, 1e-3)
// + (1 - weight) * gain / max(gains). Ties go to the lower index.
std::vector<std::size_t> schedule_importance(std::span<const double> scores, std::span<const double> gains,
                                             double weight);

struct PromptEnsemble {
  std::vector<nn::Tensor> prompts;
  std::vector<double> scores;  // per device
};

struct FlyBoostConfig {
  double threshold = 0.9;
  std::size_t max_rounds = 10;
  std::size_t paths_per_device = 20;
  std::size_t path_depth = 2;
  std::size_t ensemble_cap = 4;
  // Devices trained per round, most important first; 0 = every device below
  // the threshold.
  std::size_t max_selected = 0;
  double importance_weight = 1.0;
  std::size_t prompt_len = 4;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 8;
  double learning_rate = 0.01;
  double device_speed = 1.0 / 50.0;
  ComputeModel compute;
  channel::DigitalLinkConfig link{20.0, 2.0e7, 8, 1, true};
  std::uint64_t seed = 1;

  void validate() const;
};

struct FlyBoostDevice {
  std::size_t id = 0;
  tasks::SyntheticTask task;
  std::vector<tasks::ReasoningPath> paths;
  double channel_gain = 1.0;
  // Local prompt encoder; keeps training across the rounds the device is
  // selected in.
  std::unique_ptr<peft::PeftModel> encoder;
  std::unique_ptr<nn::Rng> rng;
};

struct FlyBoostRound {
  std::size_t round = 0;
  std::vector<double> scores_before;
  std::vector<std::size_t> selected;  // device ids, priority order
  std::size_t accepted = 0;           // candidates committed
  std::vector<double> scores_after;
  std::size_t ensemble_size = 0;
};

// Devices below the threshold train their local prompts and send them up as
// candidates. A candidate is appended while the ensemble is below the cap;
// otherwise it replaces the member whose removal least reduces any device's
// score. A change is kept only if no device's score drops.
FlyBoostRound flyboost_round(const nn::TinyTransformer& model, std::vector<FlyBoostDevice>& devices,
                             PromptEnsemble& ensemble, const FlyBoostConfig& cfg, channel::LatencyLedger& ledger,
                             PayloadAudit& audit);

struct FlyBoostRun {
  std::vector<FlyBoostDevice> devices;
  PromptEnsemble ensemble;
  std::vector<FlyBoostRound> rounds;
  std::vector<RoundTrace> traces;  // precision = mean device score
  channel::LatencyLedger ledger;
  PayloadAudit audit;
  bool converged = false;  // every score reached the threshold
};

// One device per task; the ensemble starts from a single zero prompt. Stops
// once every score reaches the threshold or after max_rounds.
FlyBoostRun run_flyboost(const nn::TinyTransformer& model, std::vector<tasks::SyntheticTask> tasks,
                         const FlyBoostConfig& cfg);

}  // namespace deft::protocols
