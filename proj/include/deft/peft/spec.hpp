// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "deft/nn/tensor.hpp"
#include "deft/nn/transformer.hpp"

namespace deft::peft {

// Soft prompt of `prompt_len` rows produced by a BiLSTM + MLP encoder from a
// fixed random initial prompt, prepended to the input embeddings.
struct PTuningSpec {
  std::size_t prompt_len = 4;
};

// Per-block key/value prefix rows, reparameterised through a shared MLP
// (width -> 4 width -> 2 width, tanh hidden).
struct PrefixSpec {
  std::vector<std::size_t> lengths;  // one per block
};

enum class LowRankConstruction { Plain, Fastfood, Kronecker };

// Weight delta on each target projection of block b with rank ranks[b]
// (0 leaves the block untouched).
//   Plain:     alpha * U V,        U [rows x r] zero-initialised, V [r x cols]
//   Fastfood:  alpha * L Z R,      L, R fixed random, Z [r x r] tunable
//   Kronecker: alpha * (A kron B), A [r x r] zero-initialised,
//                                  B [rows/r x cols/r]
struct LowRankSpec {
  std::vector<std::size_t> ranks;
  LowRankConstruction construction = LowRankConstruction::Plain;
  double alpha = 1.0;
  std::vector<std::string> targets{"attn.wq", "attn.wv"};
};

// Bottleneck adapter after the feed-forward sub-layer of each listed block:
// x + relu(x Wd + bd) Wu + bu, with Wu and bu zero-initialised.
struct AdapterSpec {
  std::size_t bottleneck = 4;
  std::vector<std::size_t> blocks{0};
};

enum class SelectiveMode { LayerSubset, BiasOnly, TopK, BinaryMask };

// Tunes a subset of the base parameters through masked deltas
// (W + mask * delta), so the base values themselves never change.
struct SelectiveSpec {
  SelectiveMode mode = SelectiveMode::BiasOnly;
  std::vector<std::size_t> layers;          // LayerSubset
  std::size_t k = 0;                        // TopK
  std::map<std::string, nn::Tensor> mask;   // BinaryMask, 0/1 per entry
};

struct PeftSpec;

struct HybridSpec {
  std::vector<PeftSpec> components;
};

struct PeftSpec {
  using Variant = std::variant<PTuningSpec, PrefixSpec, LowRankSpec, AdapterSpec, SelectiveSpec, HybridSpec>;
  Variant value;

  PeftSpec() = default;
  template <typename T>
  PeftSpec(T spec) : value(std::move(spec)) {}  // NOLINT(google-explicit-constructor)

  template <typename T>
  bool is() const { return std::holds_alternative<T>(value); }
  template <typename T>
  const T& as() const { return std::get<T>(value); }
  std::string kind() const;
};

PeftSpec compose(std::vector<PeftSpec> specs);

// Nested hybrids flattened to their leaf components, in order.
std::vector<PeftSpec> flatten(const PeftSpec& spec);

// Trainable scalar count implied by the spec's size fields alone.
std::size_t closed_form_trainable_count(const PeftSpec& spec, const nn::TransformerConfig& cfg,
                                        const nn::ParameterStore& base);

}  // namespace deft::peft
