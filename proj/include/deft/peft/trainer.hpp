// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "deft/nn/rng.hpp"
#include "deft/peft/peft_model.hpp"
#include "deft/tasks/cloze.hpp"

namespace deft::peft {

struct TrainOptions {
  double learning_rate = 0.1;
  std::size_t batch_size = 8;
};

// Loss and gradients of one cloze batch with respect to the fine-tuning
// parameters.
struct StepResult {
  double loss = 0.0;
  nn::GradMap grads;
};
StepResult loss_and_grads(const PeftModel& model, std::span<const tasks::ClozeExample> batch);

// One shuffled pass of minibatch SGD over `examples`; returns the mean
// batch loss.
double sgd_epoch(PeftModel& model, std::span<const tasks::ClozeExample> examples, const TrainOptions& options,
                 nn::Rng& rng);

}  // namespace deft::peft
