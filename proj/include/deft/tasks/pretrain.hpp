// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "deft/nn/transformer.hpp"
#include "deft/tasks/world.hpp"

namespace deft::tasks {

// Pre-training of the toy base model on every fact of the world, in the
// family-token format. Uses Adam; fine-tuning elsewhere is plain SGD.
struct PretrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double learning_rate = 0.003;
  std::size_t examples_per_fact = 2;
  std::uint64_t seed = 1;

  friend bool operator==(const PretrainConfig&, const PretrainConfig&) = default;
};

struct PretrainResult {
  double final_loss = 0.0;
  double precision = 0.0;  // on the pre-training clozes
};

PretrainResult pretrain(nn::TinyTransformer& model, const World& world, const PretrainConfig& cfg);

// Frozen, pre-trained base model. Results are memoised per process on the
// full (model, seed, world, pretrain) key, so repeated scenarios in one
// process pay for pre-training once.
const nn::TinyTransformer& pretrained_base(const nn::TransformerConfig& model_cfg, std::uint64_t model_seed,
                                           const WorldConfig& world_cfg, const PretrainConfig& cfg,
                                           PretrainResult* result = nullptr);

void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

}  // namespace deft::tasks
