// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "deft/protocols/common.hpp"
#include "deft/tasks/batching.hpp"
#include "deft/tasks/cloze.hpp"

namespace deft::protocols {

// Moves one tensor across the device/server link and returns what arrives.
using Transport = std::function<nn::Tensor(const std::string& phase, PayloadKind kind, const nn::Tensor& payload)>;

nn::Tensor ideal_transport(const std::string&, PayloadKind, const nn::Tensor& payload);

// Where the device/server cut lies for a fine-tuning technique whose
// parameters stay on the device:
//   P-tuning: the device runs the prompt encoder and embeds its tokens with the
//     (downloaded, frozen) embedding table; the server runs every block.
//   Adapter in block 0 only: the device runs embedding, block 0 and the
//     adapter; the server runs the remaining blocks.
enum class SplitKind { PTuning, Adapter };

// Throws ConfigError for any other technique.
SplitKind split_kind(const peft::PeftModel& model);

struct SplitCost {
  double device_flops = 0.0;  // forward + backward of the device part
  double server_flops = 0.0;  // forward + backward of the server part
  std::size_t upload_coeffs = 0;
  std::size_t download_coeffs = 0;
};

SplitCost split_cost(const peft::PeftModel& model, std::size_t batch, std::size_t seq_len);

// Device part up to the cut, recorded on the device's tape. For P-tuning the
// boundary is the prompt and the token embeddings travel alongside it.
struct DeviceForward {
  nn::Var boundary;
  nn::Tensor token_embeddings;  // empty for the adapter cut
};
DeviceForward device_forward(nn::Tape& tape, const peft::PeftModel& model, const tasks::ClozeBatch& batch);

struct BoundaryPass {
  double loss = 0.0;
  nn::Tensor grad;  // d loss / d boundary
};

// Server part: frozen layers above the cut, backward to the boundary.
BoundaryPass server_boundary_pass(const nn::TinyTransformer& base, SplitKind kind, const nn::Tensor& boundary,
                                  const nn::Tensor& token_embeddings, const tasks::ClozeBatch& batch);

struct SplitStep {
  double loss = 0.0;
  nn::GradMap grads;        // of the device-resident fine-tuning parameters
  nn::Tensor boundary_grad; // what the server sent down
};

// One iteration of split training: device forward, upload, server forward
// and backward to the boundary, download, device backward.
SplitStep split_step(const peft::PeftModel& model, std::span<const tasks::ClozeExample> batch,
                     const Transport& uplink, const Transport& downlink);

struct SingleDeviceConfig {
  peft::PeftSpec peft = peft::PTuningSpec{4};
  std::size_t epochs = 5;
  std::size_t iters_per_epoch = 91;
  std::size_t batch_size = 8;
  double learning_rate = 0.01;
  std::uint64_t seed = 1;
  DeviceProfile device;
  ComputeModel compute;
  channel::DigitalLinkConfig link{10.0, 2.0e7, 8, 1, true};
  // Coefficients needed to upload one raw training sample in the centralized
  // baseline; 0 means one per token.
  std::size_t raw_coeffs_per_example = 0;

  void validate() const;
};

struct TrainingRun {
  std::unique_ptr<peft::PeftModel> model;
  std::vector<RoundTrace> traces;  // one per epoch
  channel::LatencyLedger ledger;
  PayloadAudit audit;
  double final_precision = 0.0;
};

// Fine-tuning parameters on the device, frozen model on the server.
TrainingRun run_single_device_deft(const nn::TinyTransformer& base, const tasks::SyntheticTask& task,
                                   const SingleDeviceConfig& cfg);

// Raw training set uploaded once, everything computed on the server. Same
// initialisation, batches and update order as run_single_device_deft.
TrainingRun run_centralized_baseline(const nn::TinyTransformer& base, const tasks::SyntheticTask& task,
                                     const SingleDeviceConfig& cfg);

}  // namespace deft::protocols
