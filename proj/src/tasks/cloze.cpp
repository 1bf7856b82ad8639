// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/tasks/cloze.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "deft/error.hpp"

namespace deft::tasks {

namespace {

constexpr double kEvalFraction = 0.2;

void append_fillers(const World& world, std::vector<int>& tokens, std::size_t n, nn::Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) tokens.push_back(world.filler_token(rng.index(world.config().n_fillers)));
}

}  // namespace

ClozeExample pretraining_example(const World& world, std::size_t family, int subject, nn::Rng& rng) {
  ClozeExample ex;
  ex.tokens = {subject, world.family_token(family), World::kMask};
  ex.mask_pos = 2;
  append_fillers(world, ex.tokens, world.config().template_len - 2, rng);
  ex.answer = world.lookup(family, subject);
  ex.relation_id = world.fact_id(family, subject);
  return ex;
}

ClozeExample downstream_example(const World& world, std::size_t family, int subject, nn::Rng& rng) {
  ClozeExample ex;
  ex.tokens = {subject, World::kMask};
  ex.mask_pos = 1;
  append_fillers(world, ex.tokens, world.config().template_len - 2, rng);
  ex.answer = world.lookup(family, subject);
  ex.relation_id = world.fact_id(family, subject);
  return ex;
}

SyntheticTask gen_cloze_task(const World& world, std::uint64_t seed, std::size_t n_relations,
                             ClozeOptions options) {
  const WorldConfig& wc = world.config();
  if (n_relations < 1) throw InputError("a task needs at least one relation");
  if (n_relations > wc.n_entities) {
    throw InputError(fmt::format("{} relations requested but the vocabulary holds only {} entities",
                                 n_relations, wc.n_entities));
  }
  if (options.examples_per_relation < 1) throw InputError("examples_per_relation must be >= 1");
  SyntheticTask task;
  task.family = options.family;
  task.template_len = wc.template_len;
  task.vocab_size = wc.vocab_size();
  task.seed = seed;
  task.world = wc;

  nn::Rng rng = nn::Rng::stream(seed, fmt::format("task.family{}", options.family));
  int subject = world.entity_token(rng.index(wc.n_entities));
  std::vector<int> subjects;
  for (std::size_t i = 0; i < n_relations; ++i) {
    subjects.push_back(subject);
    task.table.emplace(subject, world.lookup(options.family, subject));
    subject = world.lookup(options.family, subject);
  }

  std::vector<ClozeExample> all;
  for (int s : subjects)
    for (std::size_t v = 0; v < options.examples_per_relation; ++v)
      all.push_back(downstream_example(world, options.family, s, rng));
  rng.shuffle(all.begin(), all.end());
  const auto n_eval = static_cast<std::size_t>(kEvalFraction * static_cast<double>(all.size()) + 0.5);
  task.eval.assign(all.end() - static_cast<std::ptrdiff_t>(n_eval), all.end());
  task.train.assign(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_eval));
  return task;
}

SyntheticTask gen_cloze_task(std::uint64_t seed, std::size_t n_relations, std::size_t vocab_size) {
  constexpr std::size_t kFillers = 2;
  // mask + one family token + fillers + at least two entities
  if (vocab_size < 1 + 1 + kFillers + std::max<std::size_t>(2, n_relations)) {
    throw InputError(fmt::format("vocabulary of {} is too small for {} relations", vocab_size, n_relations));
  }
  WorldConfig wc;
  wc.n_families = 1;
  wc.n_fillers = kFillers;
  wc.n_entities = vocab_size - 1 - 1 - kFillers;
  wc.template_len = 4;
  wc.seed = seed;
  return gen_cloze_task(World(wc), seed, n_relations);
}

std::vector<ReasoningPath> gen_reasoning_paths(const SyntheticTask& task, std::size_t depth,
                                               std::size_t count, std::uint64_t seed) {
  if (depth < 1) throw InputError("reasoning paths need depth >= 1");
  const World world(task.world);
  std::vector<int> starts;
  for (const auto& [subject, object] : task.table) {
    int s = subject;
    std::size_t d = 0;
    for (; d < depth; ++d) {
      auto it = task.table.find(s);
      if (it == task.table.end()) break;
      s = it->second;
    }
    if (d == depth) starts.push_back(subject);
  }
  if (starts.empty()) {
    throw GenerationError(fmt::format("no chain of {} lookups stays inside a task of {} relations", depth,
                                      task.n_relations()));
  }
  nn::Rng rng = nn::Rng::stream(seed, "reasoning_paths");
  std::vector<ReasoningPath> paths(count);
  for (auto& path : paths) {
    int s = starts[rng.index(starts.size())];
    for (std::size_t d = 0; d < depth; ++d) {
      ClozeExample ex = downstream_example(world, task.family, s, rng);
      path.slots.push_back({ex.tokens, ex.mask_pos, task.table.at(s)});
      s = task.table.at(s);
    }
  }
  return paths;
}

std::vector<Shard> split_shards(std::span<const ClozeExample> examples, std::size_t k, ShardMode mode,
                                std::uint64_t seed, SplitTag split) {
  if (k < 1) throw InputError("need at least one shard");
  if (k > examples.size()) {
    throw InputError(fmt::format("{} shards requested for {} examples", k, examples.size()));
  }
  std::vector<ClozeExample> pool(examples.begin(), examples.end());
  std::vector<Shard> shards(k);
  for (std::size_t i = 0; i < k; ++i) {
    shards[i].device = i;
    shards[i].split = split;
  }
  auto deal_contiguous = [&] {
    const std::size_t base = pool.size() / k, extra = pool.size() % k;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t n = base + (i < extra ? 1 : 0);
      shards[i].examples.assign(pool.begin() + static_cast<std::ptrdiff_t>(pos),
                                pool.begin() + static_cast<std::ptrdiff_t>(pos + n));
      pos += n;
    }
  };
  if (mode == ShardMode::Iid) {
    nn::Rng rng = nn::Rng::stream(seed, "split_shards");
    rng.shuffle(pool.begin(), pool.end());
    deal_contiguous();
    return shards;
  }
  std::stable_sort(pool.begin(), pool.end(),
                   [](const ClozeExample& a, const ClozeExample& b) { return a.relation_id < b.relation_id; });
  std::vector<std::size_t> ids;
  for (const auto& ex : pool)
    if (ids.empty() || ids.back() != ex.relation_id) ids.push_back(ex.relation_id);
  if (ids.size() < k) {
    deal_contiguous();
    return shards;
  }
  // Relation groups go to shards in contiguous runs of near-equal count.
  std::map<std::size_t, std::size_t> owner;
  for (std::size_t r = 0; r < ids.size(); ++r) owner[ids[r]] = r * k / ids.size();
  for (const auto& ex : pool) shards[owner.at(ex.relation_id)].examples.push_back(ex);
  return shards;
}

int argmax_row(const nn::Tensor& logits, std::size_t row) {
  const std::size_t n = logits.cols();
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (logits.at(row, j) > logits.at(row, best)) best = j;
  return static_cast<int>(best);
}

double evaluate_precision(const LogitFn& logits, std::span<const ClozeExample> examples) {
  if (examples.empty()) throw InputError("precision over an empty evaluation shard");
  const nn::Tensor l = logits(examples);
  if (l.rows() != examples.size()) throw UsageError("logit function returned the wrong number of rows");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i)
    if (argmax_row(l, i) == examples[i].answer) ++correct;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

namespace {

nlohmann::json examples_json(const std::vector<ClozeExample>& xs) {
  auto arr = nlohmann::json::array();
  for (const auto& x : xs)
    arr.push_back({{"tokens", x.tokens}, {"mask_pos", x.mask_pos}, {"answer", x.answer},
                   {"relation_id", x.relation_id}});
  return arr;
}

std::vector<ClozeExample> examples_from(const nlohmann::json& arr) {
  std::vector<ClozeExample> out;
  for (const auto& j : arr) {
    ClozeExample x;
    j.at("tokens").get_to(x.tokens);
    j.at("mask_pos").get_to(x.mask_pos);
    j.at("answer").get_to(x.answer);
    j.at("relation_id").get_to(x.relation_id);
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, const SyntheticTask& t) {
  auto table = nlohmann::json::array();
  for (const auto& [s, o] : t.table) table.push_back({s, o});
  j = {{"family", t.family},         {"table", table},
       {"template_len", t.template_len}, {"vocab_size", t.vocab_size},
       {"seed", t.seed},             {"world", t.world},
       {"train", examples_json(t.train)}, {"eval", examples_json(t.eval)}};
}

void from_json(const nlohmann::json& j, SyntheticTask& t) {
  j.at("family").get_to(t.family);
  t.table.clear();
  for (const auto& pair : j.at("table")) t.table.emplace(pair.at(0).get<int>(), pair.at(1).get<int>());
  j.at("template_len").get_to(t.template_len);
  j.at("vocab_size").get_to(t.vocab_size);
  j.at("seed").get_to(t.seed);
  j.at("world").get_to(t.world);
  t.train = examples_from(j.at("train"));
  t.eval = examples_from(j.at("eval"));
}

}  // namespace deft::tasks
