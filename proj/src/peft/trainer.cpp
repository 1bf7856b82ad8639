// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/peft/trainer.hpp"

#include <vector>

#include "deft/nn/ops.hpp"
#include "deft/nn/optim.hpp"
#include "deft/tasks/batching.hpp"

namespace deft::peft {

StepResult loss_and_grads(const PeftModel& model, std::span<const tasks::ClozeExample> batch) {
  const tasks::ClozeBatch b = tasks::make_batch(batch);
  nn::Tape tape;
  nn::Var loss = nn::cross_entropy(model.base().select_logits(tape, b.tokens, b.rows, &model), b.targets);
  StepResult r;
  r.loss = loss.value().item();
  r.grads = tape.backward(loss);
  return r;
}

double sgd_epoch(PeftModel& model, std::span<const tasks::ClozeExample> examples, const TrainOptions& options,
                 nn::Rng& rng) {
  std::vector<tasks::ClozeExample> order(examples.begin(), examples.end());
  rng.shuffle(order.begin(), order.end());
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t pos = 0; pos < order.size(); pos += options.batch_size) {
    const std::size_t n = std::min(options.batch_size, order.size() - pos);
    StepResult r = loss_and_grads(model, std::span(order).subspan(pos, n));
    nn::sgd_step(model.params(), r.grads, options.learning_rate);
    total += r.loss;
    ++batches;
  }
  return batches ? total / static_cast<double>(batches) : 0.0;
}

}  // namespace deft::peft
