// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/tasks/pretrain.hpp"

#include <map>
#include <memory>
#include <mutex>

#include "deft/nn/ops.hpp"
#include "deft/nn/optim.hpp"
#include "deft/tasks/batching.hpp"
#include "deft/tasks/cloze.hpp"

namespace deft::tasks {

PretrainResult pretrain(nn::TinyTransformer& model, const World& world, const PretrainConfig& cfg) {
  nn::Rng rng = nn::Rng::stream(cfg.seed, "pretrain");
  const WorldConfig& wc = world.config();
  // Fresh filler draws every epoch, so the model learns facts rather than
  // particular filler combinations.
  auto draw = [&] {
    std::vector<ClozeExample> data;
    for (std::size_t f = 0; f < wc.n_families; ++f)
      for (std::size_t e = 0; e < wc.n_entities; ++e)
        for (std::size_t v = 0; v < cfg.examples_per_fact; ++v)
          data.push_back(pretraining_example(world, f, world.entity_token(e), rng));
    return data;
  };
  std::vector<ClozeExample> data;

  model.params().set_trainable(true);
  nn::Adam adam(cfg.learning_rate);
  PretrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    data = draw();
    rng.shuffle(data.begin(), data.end());
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t pos = 0; pos < data.size(); pos += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, data.size() - pos);
      const ClozeBatch b = make_batch(std::span(data).subspan(pos, n));
      nn::Tape tape;
      nn::Var loss = nn::cross_entropy(model.select_logits(tape, b.tokens, b.rows), b.targets);
      total += loss.value().item();
      ++batches;
      adam.step(model.params(), tape.backward(loss));
    }
    result.final_loss = total / static_cast<double>(batches);
  }
  model.params().set_trainable(false);
  result.precision = precision(model, nullptr, draw());
  return result;
}

const nn::TinyTransformer& pretrained_base(const nn::TransformerConfig& model_cfg, std::uint64_t model_seed,
                                           const WorldConfig& world_cfg, const PretrainConfig& cfg,
                                           PretrainResult* result) {
  struct Entry {
    nn::TinyTransformer model;
    PretrainResult result;
  };
  static std::mutex mutex;
  static std::map<std::string, std::unique_ptr<Entry>> cache;
  const nlohmann::json key = {{"model",
                               {model_cfg.n_blocks, model_cfg.d_model, model_cfg.n_heads, model_cfg.d_ff,
                                model_cfg.vocab_size, model_cfg.max_seq}},
                              {"seed", model_seed},
                              {"world", world_cfg},
                              {"pretrain", cfg}};
  std::lock_guard lock(mutex);
  auto& slot = cache[key.dump()];
  if (!slot) {
    nn::TinyTransformer model(model_cfg, model_seed);
    const World world(world_cfg);
    PretrainResult r = pretrain(model, world, cfg);
    slot = std::make_unique<Entry>(Entry{std::move(model), r});
  }
  if (result) *result = slot->result;
  return slot->model;
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
       {"examples_per_fact", c.examples_per_fact}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("examples_per_fact").get_to(c.examples_per_fact);
  j.at("seed").get_to(c.seed);
}

}  // namespace deft::tasks
