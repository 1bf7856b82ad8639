// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "deft/nn/rng.hpp"
#include "deft/nn/tensor.hpp"
#include "deft/tasks/world.hpp"

namespace deft::tasks {

struct ClozeExample {
  std::vector<int> tokens;
  std::size_t mask_pos = 0;
  int answer = 0;
  std::size_t relation_id = 0;  // global fact id in the world

  friend bool operator==(const ClozeExample&, const ClozeExample&) = default;
};

// One relation family restricted to `n_relations` facts. Downstream clozes
// omit the family token: [subject, mask, fillers...]. The base model saw
// the family token during pre-training, so tuning has to recover which
// relation is being asked.
struct SyntheticTask {
  std::size_t family = 0;
  std::map<int, int> table;  // subject token -> object token
  std::size_t template_len = 0;
  std::size_t vocab_size = 0;
  std::uint64_t seed = 0;
  WorldConfig world;
  std::vector<ClozeExample> train;
  std::vector<ClozeExample> eval;

  std::size_t n_relations() const { return table.size(); }
};

struct ClozeOptions {
  std::size_t family = 0;
  std::size_t examples_per_relation = 5;
};

// Facts are consecutive subjects along the family's permutation cycle, from a
// seeded start, so chained lookups stay inside the task.
SyntheticTask gen_cloze_task(const World& world, std::uint64_t seed, std::size_t n_relations,
                             ClozeOptions options = {});

// Single-family world sized from the vocabulary (two fillers, the remaining
// tokens entities).
SyntheticTask gen_cloze_task(std::uint64_t seed, std::size_t n_relations, std::size_t vocab_size);

// Cloze with the family token present, the pre-training format:
// [subject, family, mask, fillers...].
ClozeExample pretraining_example(const World& world, std::size_t family, int subject,
                                 nn::Rng& rng);

// Cloze in the downstream format for an arbitrary subject.
ClozeExample downstream_example(const World& world, std::size_t family, int subject,
                                nn::Rng& rng);

struct ReasoningSlot {
  std::vector<int> context;  // teacher-forced: built from the previous ground truth
  std::size_t mask_pos = 0;
  int truth = 0;
};

struct ReasoningPath {
  std::vector<ReasoningSlot> slots;
};

// Paths chaining `depth` lookups through the task's table; slot i+1's
// subject is slot i's ground truth.
std::vector<ReasoningPath> gen_reasoning_paths(const SyntheticTask& task, std::size_t depth,
                                               std::size_t count, std::uint64_t seed);

enum class ShardMode { Iid, TaskClustered };
enum class SplitTag { Train, Eval };

struct Shard {
  std::size_t device = 0;
  std::vector<ClozeExample> examples;
  SplitTag split = SplitTag::Train;
};

std::vector<Shard> split_shards(std::span<const ClozeExample> examples, std::size_t k, ShardMode mode,
                                std::uint64_t seed, SplitTag split = SplitTag::Train);

// Logits at the mask rows, one row per example, in order.
using LogitFn = std::function<nn::Tensor(std::span<const ClozeExample>)>;

// Argmax accuracy; ties resolve to the lowest token index.
double evaluate_precision(const LogitFn& logits, std::span<const ClozeExample> examples);
int argmax_row(const nn::Tensor& logits, std::size_t row);

void to_json(nlohmann::json& j, const SyntheticTask& t);
void from_json(const nlohmann::json& j, SyntheticTask& t);

}  // namespace deft::tasks
