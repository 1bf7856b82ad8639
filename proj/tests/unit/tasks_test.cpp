// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "deft/error.hpp"
#include "deft/peft/peft_model.hpp"
#include "deft/peft/trainer.hpp"
#include "deft/tasks/batching.hpp"
#include "deft/tasks/cloze.hpp"

namespace deft::tasks {
namespace {

TEST(World, FamiliesArePermutationsWithoutFixedPoints) {
  const World w(WorldConfig{});
  for (std::size_t f = 0; f < 4; ++f) {
    std::set<int> objects;
    for (std::size_t e = 0; e < 24; ++e) {
      const int s = w.entity_token(e);
      const int o = w.lookup(f, s);
      EXPECT_TRUE(w.is_entity(o));
      EXPECT_NE(o, s);
      objects.insert(o);
    }
    EXPECT_EQ(objects.size(), 24u);
  }
}

TEST(ClozeTask, SameSeedSameTask) {
  const auto a = gen_cloze_task(7, 10, 40), b = gen_cloze_task(7, 10, 40);
  EXPECT_EQ(a.table, b.table);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.eval, b.eval);
  const auto c = gen_cloze_task(8, 10, 40);
  EXPECT_FALSE(a.train == c.train && a.table == c.table);
}

TEST(ClozeTask, VocabularyTooSmall) {
  EXPECT_THROW(gen_cloze_task(1, 10, 8), InputError);
  EXPECT_THROW(gen_cloze_task(1, 0, 40), InputError);
  const World w(WorldConfig{});
  EXPECT_THROW(gen_cloze_task(w, 1, 25), InputError);
}

TEST(ClozeTask, TokensInVocabAndTableIsFunction) {
  const auto t = gen_cloze_task(3, 12, 32);
  EXPECT_EQ(t.n_relations(), 12u);
  std::size_t total = 0;
  for (const auto* split : {&t.train, &t.eval}) {
    for (const auto& ex : *split) {
      ++total;
      ASSERT_EQ(ex.tokens.size(), t.template_len);
      for (int tok : ex.tokens) {
        EXPECT_GE(tok, 0);
        EXPECT_LT(static_cast<std::size_t>(tok), t.vocab_size);
      }
      EXPECT_EQ(ex.tokens[ex.mask_pos], World::kMask);
      EXPECT_EQ(t.table.at(ex.tokens[0]), ex.answer);
    }
  }
  EXPECT_EQ(t.eval.size(), total / 5);
}

TEST(ClozeTask, AnswerDistributionMatchesTableByEnumeration) {
  const World w(WorldConfig{});
  const auto t = gen_cloze_task(w, 11, 20, {2, 6});
  std::map<std::pair<int, int>, std::size_t> seen;
  for (const auto* split : {&t.train, &t.eval})
    for (const auto& ex : *split) ++seen[{ex.tokens[0], ex.answer}];
  // Exhaustive: every (subject, object) pair appears exactly examples_per_relation
  // times, and nothing else does.
  std::map<std::pair<int, int>, std::size_t> expected;
  for (std::size_t e = 0; e < 24; ++e) {
    const int s = w.entity_token(e);
    if (t.table.count(s)) expected[{s, w.lookup(2, s)}] = 6;
  }
  EXPECT_EQ(expected.size(), 20u);
  EXPECT_EQ(seen, expected);
}

TEST(ClozeTask, SingleRelationBiasOnlyReachesFullPrecision) {
  const auto t = gen_cloze_task(5, 1, 32);
  for (const auto& ex : t.train) EXPECT_EQ(ex.answer, t.train.front().answer);
  nn::TinyTransformer base({1, 8, 2, 16, 32, 8}, 4);
  base.params().set_trainable(false);
  peft::PeftModel m(base, peft::SelectiveSpec{peft::SelectiveMode::BiasOnly, {}, 0, {}}, 1);
  nn::Rng rng(1);
  for (int e = 0; e < 30; ++e) peft::sgd_epoch(m, t.train, {0.5, 4}, rng);
  EXPECT_EQ(precision(base, &m, t.eval), 1.0);
}

TEST(ClozeTask, JsonRoundTrip) {
  const auto t = gen_cloze_task(WorldConfig{}.seed, 6, 32);
  const nlohmann::json j = t;
  const SyntheticTask back = j.get<SyntheticTask>();
  EXPECT_EQ(back.table, t.table);
  EXPECT_EQ(back.train, t.train);
  EXPECT_EQ(back.eval, t.eval);
  EXPECT_EQ(back.world, t.world);
  EXPECT_EQ(back.seed, t.seed);
}

TEST(ReasoningPaths, DepthOneIsPlainCloze) {
  const auto t = gen_cloze_task(2, 8, 32);
  for (const auto& p : gen_reasoning_paths(t, 1, 10, 3)) {
    ASSERT_EQ(p.slots.size(), 1u);
    EXPECT_EQ(p.slots[0].context[p.slots[0].mask_pos], World::kMask);
    EXPECT_EQ(p.slots[0].truth, t.table.at(p.slots[0].context[0]));
  }
}

TEST(ReasoningPaths, SecondTruthIsComposition) {
  const auto t = gen_cloze_task(2, 8, 32);
  for (const auto& p : gen_reasoning_paths(t, 2, 10, 3)) {
    const int s = p.slots[0].context[0];
    EXPECT_EQ(p.slots[1].truth, t.table.at(t.table.at(s)));
    EXPECT_EQ(p.slots[1].context[0], p.slots[0].truth);
  }
}

TEST(ReasoningPaths, ReplayAgainstTable) {
  const auto t = gen_cloze_task(9, 12, 32);
  const auto paths = gen_reasoning_paths(t, 4, 50, 1);
  EXPECT_EQ(paths.size(), 50u);
  for (const auto& p : paths) {
    ASSERT_EQ(p.slots.size(), 4u);
    int s = p.slots[0].context[0];
    for (const auto& slot : p.slots) {
      ASSERT_EQ(slot.context[0], s);
      s = t.table.at(s);
      EXPECT_EQ(slot.truth, s);
    }
  }
  const auto again = gen_reasoning_paths(t, 4, 50, 1);
  for (std::size_t i = 0; i < paths.size(); ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(again[i].slots[j].context, paths[i].slots[j].context);
}

TEST(ReasoningPaths, NonComposableIsGenerationError) {
  const auto t = gen_cloze_task(2, 1, 32);
  EXPECT_THROW(gen_reasoning_paths(t, 2, 1, 1), GenerationError);
  EXPECT_THROW(gen_reasoning_paths(t, 0, 1, 1), InputError);
}

std::multiset<std::vector<int>> as_multiset(std::span<const ClozeExample> xs) {
  std::multiset<std::vector<int>> out;
  for (const auto& x : xs) {
    auto key = x.tokens;
    key.push_back(static_cast<int>(x.relation_id));
    out.insert(key);
  }
  return out;
}

TEST(Shards, SingleShardIsEverything) {
  const auto t = gen_cloze_task(1, 10, 32);
  for (auto mode : {ShardMode::Iid, ShardMode::TaskClustered}) {
    const auto s = split_shards(t.train, 1, mode, 4);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(as_multiset(s[0].examples), as_multiset(t.train));
  }
}

TEST(Shards, PartitionIsExhaustiveAndDisjoint) {
  const auto t = gen_cloze_task(1, 10, 32);
  for (auto mode : {ShardMode::Iid, ShardMode::TaskClustered}) {
    for (std::size_t k : {2u, 3u, 7u, 40u}) {
      const auto s = split_shards(t.train, k, mode, 4);
      std::vector<ClozeExample> all;
      for (std::size_t i = 0; i < k; ++i) {
        EXPECT_EQ(s[i].device, i);
        all.insert(all.end(), s[i].examples.begin(), s[i].examples.end());
      }
      EXPECT_EQ(all.size(), t.train.size());
      EXPECT_EQ(as_multiset(all), as_multiset(t.train));
    }
  }
  EXPECT_THROW(split_shards(t.train, 41, ShardMode::Iid, 1), InputError);
  EXPECT_THROW(split_shards(t.train, 0, ShardMode::Iid, 1), InputError);
}

TEST(Shards, ClusteredRelationSetsAreDisjoint) {
  const auto t = gen_cloze_task(6, 12, 32);
  for (std::size_t k : {2u, 5u, 12u}) {
    const auto s = split_shards(t.train, k, ShardMode::TaskClustered, 1);
    std::map<std::size_t, std::size_t> owner;
    for (const auto& shard : s) {
      EXPECT_FALSE(shard.examples.empty());
      for (const auto& ex : shard.examples) {
        auto [it, fresh] = owner.emplace(ex.relation_id, shard.device);
        EXPECT_EQ(it->second, shard.device) << "relation " << ex.relation_id;
      }
    }
  }
}

TEST(Shards, IidDependsOnSeed) {
  const auto t = gen_cloze_task(1, 10, 32);
  const auto a = split_shards(t.train, 4, ShardMode::Iid, 1), b = split_shards(t.train, 4, ShardMode::Iid, 1),
             c = split_shards(t.train, 4, ShardMode::Iid, 2);
  EXPECT_EQ(a[0].examples, b[0].examples);
  EXPECT_NE(a[0].examples, c[0].examples);
}

TEST(Precision, OracleModelScoresOne) {
  const auto t = gen_cloze_task(3, 10, 32);
  const LogitFn oracle = [&](std::span<const ClozeExample> xs) {
    nn::Tensor l({xs.size(), t.vocab_size});
    for (std::size_t i = 0; i < xs.size(); ++i) l.at(i, static_cast<std::size_t>(xs[i].answer)) = 1.0;
    return l;
  };
  EXPECT_EQ(evaluate_precision(oracle, t.eval), 1.0);
  EXPECT_THROW(evaluate_precision(oracle, {}), InputError);
}

TEST(Precision, UniformRandomModelIsNearChance) {
  const std::size_t vocab = 32, n = 20000;
  std::vector<ClozeExample> xs(n);
  nn::Rng data(5);
  for (auto& x : xs) x.answer = static_cast<int>(data.index(vocab));
  nn::Rng noise(6);
  const LogitFn random = [&](std::span<const ClozeExample> batch) {
    return noise.normal_tensor({batch.size(), vocab}, 1.0);
  };
  const double p = evaluate_precision(random, xs);
  const double q = 1.0 / vocab, sigma = std::sqrt(q * (1 - q) / n);
  EXPECT_NEAR(p, q, 3 * sigma);
}

TEST(Precision, InvariantUnderPositiveScaling) {
  const auto t = gen_cloze_task(3, 10, 32);
  nn::Rng rng(2);
  const nn::Tensor base = rng.normal_tensor({t.eval.size(), t.vocab_size}, 1.0);
  auto scaled = [&](double c) {
    return LogitFn([&, c](std::span<const ClozeExample>) {
      nn::Tensor l = base;
      for (double& v : l.data()) v *= c;
      return l;
    });
  };
  const double p = evaluate_precision(scaled(1.0), t.eval);
  for (double c : {1e-3, 0.5, 7.0, 1e6}) EXPECT_EQ(evaluate_precision(scaled(c), t.eval), p);
}

TEST(Precision, TiesGoToLowestToken) {
  const nn::Tensor l = nn::Tensor::matrix({{0, 2, 2, 1}});
  EXPECT_EQ(argmax_row(l, 0), 1);
}

}  // namespace
}  // namespace deft::tasks
