// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "deft/protocols/common.hpp"
#include "deft/protocols/split.hpp"
#include "deft/tasks/cloze.hpp"

namespace deft::protocols {

struct Emulator {
  nn::TinyTransformer model;
  std::vector<std::size_t> kept_blocks;
  double parameter_ratio = 1.0;  // emulator / original parameter count
};

// Layer-dropped copy: ceil(keep_fraction * n_blocks) blocks, evenly spaced
// and always including the first and last block when two or more are kept.
Emulator compress_emulator(const nn::TinyTransformer& model, double keep_fraction);

// Forward + backward flops of one full training step of `model` on a batch.
double training_flops(const peft::PeftModel& model, std::size_t batch, std::size_t seq_len);

struct FederatedLink {
  LinkKind kind = LinkKind::Digital;
  channel::DigitalLinkConfig digital{20.0, 2.0e7, 8, 1, true};
  channel::AirCompConfig aircomp;
};

struct FederatedDevice {
  DeviceProfile profile;
  std::unique_ptr<peft::PeftModel> model;
  std::unique_ptr<BatchStream> batches;
};

struct RoundContext {
  const FederatedLink& link;
  const ComputeModel& compute;
  double learning_rate = 0.01;
  nn::Rng& rng;
  channel::LatencyLedger& ledger;
  PayloadAudit& audit;
};

struct FederatedRound {
  double mean_loss = 0.0;
  std::vector<double> device_losses;
  nn::Tensor aggregate;  // what the server broadcast
};

// Every device computes a local gradient through its emulator, uploads it,
// the server averages and broadcasts, and every device applies the same
// update. Throws ConsistencyError if the device states diverge.
FederatedRound federated_emulator_round(std::vector<FederatedDevice>& devices, const RoundContext& ctx);

// Devices upload their soft prompts (aggregated by averaging over the link)
// and data embeddings, or block-0 adapter outputs. The server runs the frozen
// model over the pooled batch, back-propagates to the boundary and sends the
// gradient down; devices finish the backward pass through their own
// parameters.
FederatedRound federated_server_assisted_round(std::vector<FederatedDevice>& devices, const RoundContext& ctx);

enum class FederatedParadigm { Emulator, ServerAssisted };

struct FederatedConfig {
  FederatedParadigm paradigm = FederatedParadigm::Emulator;
  std::size_t n_devices = 4;
  double keep_fraction = 0.5;
  peft::PeftSpec peft = peft::PTuningSpec{4};
  std::size_t epochs = 10;
  std::size_t iters_per_epoch = 115;
  std::size_t batch_size = 8;
  double learning_rate = 0.01;
  tasks::ShardMode shard_mode = tasks::ShardMode::Iid;
  double device_speed = 1.0 / 50.0;
  ComputeModel compute;
  FederatedLink link;
  std::uint64_t seed = 1;

  void validate() const;
};

struct FederatedRun {
  std::vector<FederatedDevice> devices;
  std::vector<RoundTrace> traces;  // one per epoch
  channel::LatencyLedger ledger;
  PayloadAudit audit;
  double final_precision = 0.0;
  std::optional<Emulator> emulator;  // emulator paradigm only
};

FederatedRun run_federated(const nn::TinyTransformer& base, const tasks::SyntheticTask& task,
                           const FederatedConfig& cfg);

}  // namespace deft::protocols
