// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/tasks/world.hpp"

#include <numeric>

#include <fmt/format.h>

#include "deft/error.hpp"
#include "deft/nn/rng.hpp"

namespace deft::tasks {

void WorldConfig::validate() const {
  if (n_families < 1) throw InputError("world needs at least one relation family");
  if (n_entities < 2) throw InputError("world needs at least two entities");
  if (template_len < 2) throw InputError("cloze template needs room for subject and mask");
  if (template_len > 2 && n_fillers < 1) throw InputError("templates longer than 2 need filler tokens");
}

World::World(WorldConfig config) : config_(config) {
  config_.validate();
  const std::size_t n = config_.n_entities;
  for (std::size_t f = 0; f < config_.n_families; ++f) {
    // Sattolo's algorithm: a uniformly random single-cycle permutation, so no
    // entity maps to itself.
    nn::Rng rng = nn::Rng::stream(config_.seed, fmt::format("world.family{}", f));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i)]);
    table_.push_back(std::move(perm));
  }
}

int World::family_token(std::size_t family) const {
  if (family >= config_.n_families) throw InputError(fmt::format("no relation family {}", family));
  return static_cast<int>(1 + family);
}

int World::filler_token(std::size_t i) const {
  if (i >= config_.n_fillers) throw InputError(fmt::format("no filler {}", i));
  return static_cast<int>(1 + config_.n_families + i);
}

int World::entity_token(std::size_t entity) const {
  if (entity >= config_.n_entities) throw InputError(fmt::format("no entity {}", entity));
  return static_cast<int>(1 + config_.n_families + config_.n_fillers + entity);
}

bool World::is_entity(int token) const {
  const int first = entity_token(0);
  return token >= first && token < first + static_cast<int>(config_.n_entities);
}

int World::lookup(std::size_t family, int subject) const {
  if (family >= config_.n_families) throw InputError(fmt::format("no relation family {}", family));
  if (!is_entity(subject)) throw InputError(fmt::format("token {} is not an entity", subject));
  const auto e = static_cast<std::size_t>(subject - entity_token(0));
  return entity_token(table_[family][e]);
}

std::size_t World::fact_id(std::size_t family, int subject) const {
  if (!is_entity(subject)) throw InputError(fmt::format("token {} is not an entity", subject));
  return family * config_.n_entities + static_cast<std::size_t>(subject - entity_token(0));
}

void to_json(nlohmann::json& j, const WorldConfig& c) {
  j = {{"n_families", c.n_families}, {"n_entities", c.n_entities}, {"n_fillers", c.n_fillers},
       {"template_len", c.template_len}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, WorldConfig& c) {
  j.at("n_families").get_to(c.n_families);
  j.at("n_entities").get_to(c.n_entities);
  j.at("n_fillers").get_to(c.n_fillers);
  j.at("template_len").get_to(c.template_len);
  j.at("seed").get_to(c.seed);
}

}  // namespace deft::tasks
