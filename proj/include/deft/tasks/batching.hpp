// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "deft/nn/transformer.hpp"
#include "deft/tasks/cloze.hpp"

namespace deft::tasks {

// Equal-length clozes packed for TinyTransformer::select_logits.
struct ClozeBatch {
  nn::TokenBatch tokens;
  std::vector<std::size_t> rows;  // mask position per sequence
  std::vector<int> targets;
};

ClozeBatch make_batch(std::span<const ClozeExample> examples);

// Logits at the mask rows, [examples, vocab]. Examples of different lengths
// are evaluated in separate batches.
nn::Tensor mask_logits(const nn::TinyTransformer& model, const nn::ForwardHooks* hooks,
                       std::span<const ClozeExample> examples);

double precision(const nn::TinyTransformer& model, const nn::ForwardHooks* hooks,
                 std::span<const ClozeExample> examples);

// Mean cross-entropy at the mask rows, no gradient.
double mean_loss(const nn::TinyTransformer& model, const nn::ForwardHooks* hooks,
                 std::span<const ClozeExample> examples);

}  // namespace deft::tasks
