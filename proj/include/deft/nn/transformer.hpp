// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deft/nn/params.hpp"

namespace deft::nn {

struct TransformerConfig {
  std::size_t n_blocks = 2;
  std::size_t d_model = 16;
  std::size_t n_heads = 2;
  std::size_t d_ff = 64;
  std::size_t vocab_size = 32;
  std::size_t max_seq = 16;

  void validate() const;
  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

// Equal-length token sequences stored back to back.
struct TokenBatch {
  std::vector<int> tokens;
  std::size_t seq_len = 0;

  std::size_t count() const { return seq_len == 0 ? 0 : tokens.size() / seq_len; }
};

struct KvPrefix {
  Var k;
  Var v;
};

// Attachment points a fine-tuning technique can use to alter the forward
// pass. The defaults leave the base model untouched.
class ForwardHooks {
 public:
  virtual ~ForwardHooks() = default;

  // Rows placed in front of every sequence's input embeddings.
  virtual std::optional<Var> prompt(Tape&) const { return std::nullopt; }
  // Effective value of a base parameter (base plus any delta).
  virtual Var parameter(Tape&, const Parameter&, Var base) const { return base; }
  // Extra key/value rows for one block's attention.
  virtual std::optional<KvPrefix> kv_prefix(Tape&, std::size_t /*block*/) const { return std::nullopt; }
  // Applied to the residual stream after a block's feed-forward sub-layer.
  virtual Var after_ffn(Tape&, std::size_t /*block*/, Var x) const { return x; }
};

// Pre-layer-norm transformer encoder with a linear output head and no
// positional encoding (the synthetic cloze tasks are order free).
//
// Parameter names: "embed", "block{b}.{ln1,ln2}.{gain,offset}",
// "block{b}.attn.{wq,wk,wv,wo}", "block{b}.ffn.{w1,b1,w2,b2}",
// "final_ln.{gain,offset}", "head.{w,b}". Weights are applied as x * W.
class TinyTransformer {
 public:
  TinyTransformer(TransformerConfig config, std::uint64_t seed);

  const TransformerConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  static std::string block_param(std::size_t block, const std::string& role);

  // Logits for one sequence, shape [prompt_len + seq, vocab].
  Var forward(Tape& tape, std::span<const int> tokens, const ForwardHooks* hooks = nullptr) const;

  // Logits at one selected row per sequence (row index within the token
  // sequence, before any prompt rows), shape [batch, vocab].
  Var select_logits(Tape& tape, const TokenBatch& batch, std::span<const std::size_t> rows,
                    const ForwardHooks* hooks = nullptr) const;

  // Forward stages; the split protocols cut between them.
  struct Embedded {
    Var x;                   // [batch * group_len, d_model]
    std::size_t group_len;   // prompt_len + seq_len
    std::size_t prompt_len;
  };
  Embedded embed(Tape& tape, const TokenBatch& batch, const ForwardHooks* hooks = nullptr) const;
  Var token_embeddings(Tape& tape, const TokenBatch& batch, const ForwardHooks* hooks = nullptr) const;
  Var run_blocks(Tape& tape, Var x, std::size_t group_len, std::size_t first, std::size_t last,
                 const ForwardHooks* hooks = nullptr) const;
  Var final_norm(Tape& tape, Var x, const ForwardHooks* hooks = nullptr) const;
  Var head(Tape& tape, Var h, const ForwardHooks* hooks = nullptr) const;

  // Row indices (into the embedded stream) of the selected rows.
  static std::vector<std::size_t> stream_rows(std::size_t group_len, std::size_t prompt_len,
                                              std::span<const std::size_t> rows);

  // Copy keeping only the listed blocks (renumbered 0..k-1); embedding,
  // final norm and head are kept.
  TinyTransformer with_blocks(std::span<const std::size_t> keep) const;

  // Restores parameter values by name; shapes must match.
  void load_values(const std::vector<std::pair<std::string, Tensor>>& values);

 private:
  TinyTransformer(TransformerConfig config, ParameterStore params);
  Var bind(Tape& tape, const std::string& name, const ForwardHooks* hooks) const;
  Var block(Tape& tape, Var x, std::size_t b, std::size_t group_len, const ForwardHooks* hooks) const;

  TransformerConfig config_;
  ParameterStore params_;
};

}  // namespace deft::nn
