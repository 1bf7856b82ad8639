// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

namespace deft::tasks {

// Token layout of a synthetic world:
//   0                      mask token
//   1 .. F                 one token per relation family
//   F+1 .. F+n_fillers     filler tokens (noise around the cloze)
//   then n_entities        entity tokens (subjects and answers)
struct WorldConfig {
  std::size_t n_families = 4;
  std::size_t n_entities = 24;
  std::size_t n_fillers = 3;
  std::size_t template_len = 4;  // tokens per cloze: subject, mask, fillers
  std::uint64_t seed = 1;

  std::size_t vocab_size() const { return 1 + n_families + n_fillers + n_entities; }
  void validate() const;
  friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

// Fixed knowledge the base model is pre-trained on: each family is a
// permutation of the entities without fixed points, so lookups compose to
// any depth.
class World {
 public:
  static constexpr int kMask = 0;

  explicit World(WorldConfig config);

  const WorldConfig& config() const { return config_; }
  std::size_t vocab_size() const { return config_.vocab_size(); }

  int family_token(std::size_t family) const;
  int filler_token(std::size_t i) const;
  int entity_token(std::size_t entity) const;
  bool is_entity(int token) const;

  // Object token of (family, subject token).
  int lookup(std::size_t family, int subject) const;
  // Global fact id of (family, subject token).
  std::size_t fact_id(std::size_t family, int subject) const;

 private:
  WorldConfig config_;
  std::vector<std::vector<std::size_t>> table_;  // [family][entity] -> entity
};

void to_json(nlohmann::json& j, const WorldConfig& c);
void from_json(const nlohmann::json& j, WorldConfig& c);

}  // namespace deft::tasks
