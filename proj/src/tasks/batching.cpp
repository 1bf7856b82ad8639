// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/tasks/batching.hpp"

#include <map>

#include "deft/error.hpp"
#include "deft/nn/ops.hpp"

namespace deft::tasks {

ClozeBatch make_batch(std::span<const ClozeExample> examples) {
  if (examples.empty()) throw InputError("empty batch");
  ClozeBatch b;
  b.tokens.seq_len = examples.front().tokens.size();
  for (const auto& ex : examples) {
    if (ex.tokens.size() != b.tokens.seq_len) throw InputError("batch mixes cloze lengths");
    b.tokens.tokens.insert(b.tokens.tokens.end(), ex.tokens.begin(), ex.tokens.end());
    b.rows.push_back(ex.mask_pos);
    b.targets.push_back(ex.answer);
  }
  return b;
}

nn::Tensor mask_logits(const nn::TinyTransformer& model, const nn::ForwardHooks* hooks,
                       std::span<const ClozeExample> examples) {
  std::map<std::size_t, std::vector<std::size_t>> by_len;
  for (std::size_t i = 0; i < examples.size(); ++i) by_len[examples[i].tokens.size()].push_back(i);
  const std::size_t v = model.config().vocab_size;
  nn::Tensor out({examples.size(), v});
  for (const auto& [len, idx] : by_len) {
    std::vector<ClozeExample> group;
    for (std::size_t i : idx) group.push_back(examples[i]);
    const ClozeBatch b = make_batch(group);
    nn::Tape tape;
    const nn::Tensor l = model.select_logits(tape, b.tokens, b.rows, hooks).value();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < v; ++j) out.at(idx[r], j) = l.at(r, j);
  }
  return out;
}

double precision(const nn::TinyTransformer& model, const nn::ForwardHooks* hooks,
                 std::span<const ClozeExample> examples) {
  return evaluate_precision(
      [&](std::span<const ClozeExample> xs) { return mask_logits(model, hooks, xs); }, examples);
}

double mean_loss(const nn::TinyTransformer& model, const nn::ForwardHooks* hooks,
                 std::span<const ClozeExample> examples) {
  const nn::Tensor l = mask_logits(model, hooks, examples);
  std::vector<int> targets;
  for (const auto& ex : examples) targets.push_back(ex.answer);
  nn::Tape tape;
  return nn::cross_entropy(tape.constant(l), targets).value().item();
}

}  // namespace deft::tasks
