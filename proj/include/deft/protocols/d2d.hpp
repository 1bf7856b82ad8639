// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "deft/protocols/common.hpp"
#include "deft/tasks/cloze.hpp"

namespace deft::protocols {

// PerSource: one logit per source. PerCoefficient: one logit per source and
// prompt coefficient; the softmax runs over sources at every position.
enum class AttentionMode { PerSource, PerCoefficient };

struct AttentionState {
  AttentionMode mode = AttentionMode::PerSource;
  nn::Tensor logits;  // [1, K] or [L * d, K]

  static AttentionState uniform(AttentionMode mode, std::size_t n_sources, std::size_t prompt_coeffs);
  std::size_t n_sources() const { return logits.cols(); }
  // Softmax over sources, same shape as the logits.
  nn::Tensor weights() const;
};

// Exact fusion sum_k a_k * P_k. Throws InputError when the prompts differ in
// shape or do not match the attention state.
nn::Tensor fuse_prompts(std::span<const nn::Tensor> sources, const AttentionState& state);

struct FusionLink {
  LinkKind kind = LinkKind::AirComp;
  channel::DigitalLinkConfig digital{20.0, 2.0e7, 8, 1, false};
  channel::AirCompConfig aircomp;
};

// One transfer: the server broadcasts the attention weights, every source
// uploads its weighted prompt and the server receives their sum, by one
// AirComp aggregation or K FDMA digital uploads.
nn::Tensor transmit_fusion(std::span<const nn::Tensor> sources, const AttentionState& state, const FusionLink& link,
                           nn::Rng& rng, channel::LatencyLedger& ledger, PayloadAudit& audit);

struct FuseOptions {
  double learning_rate = 1.0;
  double max_grad_norm = 0.0;  // clip the logit gradient to this norm; 0 = off
};

struct FuseStep {
  nn::Tensor fused;  // as received by the server
  double loss = 0.0;
};

// One iteration: transmit, run the frozen model with the received prompt on
// the target batch and take an SGD step on the attention logits. The channel
// error enters the forward pass as a constant offset.
FuseStep d2d_fuse(const nn::TinyTransformer& model, std::span<const nn::Tensor> sources, AttentionState& state,
                  std::span<const tasks::ClozeExample> batch, const FusionLink& link, const FuseOptions& options,
                  nn::Rng& rng, channel::LatencyLedger& ledger, PayloadAudit& audit);

struct D2DConfig {
  std::size_t n_sources = 10;
  AttentionMode mode = AttentionMode::PerSource;
  std::size_t prompt_len = 4;
  std::size_t epochs = 10;
  std::size_t iters_per_epoch = 115;
  std::size_t batch_size = 8;
  FuseOptions fuse{1.0, 1.0};
  // Source prompts: P-tuning on source tasks before the transfer.
  std::size_t source_epochs = 10;
  double source_learning_rate = 0.01;
  std::size_t relations_per_task = 12;
  std::size_t target_family = 0;
  FusionLink link;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SourcePrompts {
  std::vector<tasks::SyntheticTask> tasks;
  std::vector<nn::Tensor> prompts;
};

// Source k is trained on family k mod n_families of the world.
SourcePrompts train_source_prompts(const nn::TinyTransformer& model, const tasks::World& world,
                                   const D2DConfig& cfg);

struct D2DRun {
  AttentionState attention;
  std::vector<RoundTrace> traces;  // one per epoch
  channel::LatencyLedger ledger;
  PayloadAudit audit;
  double final_precision = 0.0;
  // Per epoch, cumulative seconds of the prompt transfer itself
  // (broadcast_attention + upload_weighted_prompt).
  std::vector<double> cumulative_transfer_comm;
};

// Precision is measured with a prompt received over the configured link.
D2DRun run_d2d(const nn::TinyTransformer& model, std::span<const nn::Tensor> sources,
               const tasks::SyntheticTask& target, const D2DConfig& cfg);

}  // namespace deft::protocols
