// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/nn/transformer.hpp"

#include <fmt/format.h>

#include "deft/error.hpp"
#include "deft/nn/ops.hpp"

namespace deft::nn {

namespace {
constexpr double kInitStd = 0.02;
}

void TransformerConfig::validate() const {
  if (n_blocks < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || vocab_size < 1 || max_seq < 1) {
    throw ConfigError("transformer config fields must all be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError(fmt::format("d_model {} is not divisible by n_heads {}", d_model, n_heads));
  }
}

std::string TinyTransformer::block_param(std::size_t block, const std::string& role) {
  return fmt::format("block{}.{}", block, role);
}

TinyTransformer::TinyTransformer(TransformerConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model, f = config_.d_ff, v = config_.vocab_size;
  params_.add_normal("embed", {v, d}, seed, kInitStd, ParamKind::Embedding);
  for (std::size_t b = 0; b < config_.n_blocks; ++b) {
    const int bi = static_cast<int>(b);
    params_.add_constant(block_param(b, "ln1.gain"), {d}, 1.0, ParamKind::Gain, bi);
    params_.add_constant(block_param(b, "ln1.offset"), {d}, 0.0, ParamKind::Bias, bi);
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      params_.add_normal(block_param(b, w), {d, d}, seed, kInitStd, ParamKind::Weight, bi);
    }
    params_.add_constant(block_param(b, "ln2.gain"), {d}, 1.0, ParamKind::Gain, bi);
    params_.add_constant(block_param(b, "ln2.offset"), {d}, 0.0, ParamKind::Bias, bi);
    params_.add_normal(block_param(b, "ffn.w1"), {d, f}, seed, kInitStd, ParamKind::Weight, bi);
    params_.add_constant(block_param(b, "ffn.b1"), {f}, 0.0, ParamKind::Bias, bi);
    params_.add_normal(block_param(b, "ffn.w2"), {f, d}, seed, kInitStd, ParamKind::Weight, bi);
    params_.add_constant(block_param(b, "ffn.b2"), {d}, 0.0, ParamKind::Bias, bi);
  }
  params_.add_constant("final_ln.gain", {d}, 1.0, ParamKind::Gain);
  params_.add_constant("final_ln.offset", {d}, 0.0, ParamKind::Bias);
  params_.add_normal("head.w", {d, v}, seed, kInitStd, ParamKind::Weight);
  params_.add_constant("head.b", {v}, 0.0, ParamKind::Bias);
}

TinyTransformer::TinyTransformer(TransformerConfig config, ParameterStore params)
    : config_(config), params_(std::move(params)) {}

Var TinyTransformer::bind(Tape& tape, const std::string& name, const ForwardHooks* hooks) const {
  const Parameter& p = params_.get(name);
  Var base = tape.leaf(p.name, p.value, p.trainable);
  return hooks ? hooks->parameter(tape, p, base) : base;
}

Var TinyTransformer::token_embeddings(Tape& tape, const TokenBatch& batch,
                                      const ForwardHooks* hooks) const {
  if (batch.seq_len == 0 || batch.tokens.empty() || batch.tokens.size() % batch.seq_len != 0) {
    throw InputError("token batch is empty or ragged");
  }
  for (int t : batch.tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
      throw InputError(fmt::format("token {} outside vocabulary of size {}", t, config_.vocab_size));
    }
  }
  return embedding(bind(tape, "embed", hooks), batch.tokens);
}

TinyTransformer::Embedded TinyTransformer::embed(Tape& tape, const TokenBatch& batch,
                                                 const ForwardHooks* hooks) const {
  Var x = token_embeddings(tape, batch, hooks);
  std::optional<Var> prompt = hooks ? hooks->prompt(tape) : std::nullopt;
  const std::size_t plen = prompt ? prompt->value().rows() : 0;
  const std::size_t group_len = plen + batch.seq_len;
  if (group_len > config_.max_seq) {
    throw CapacityError(fmt::format("sequence of {} rows (prompt {}) exceeds max_seq {}", group_len,
                                    plen, config_.max_seq));
  }
  if (prompt && plen > 0) x = prepend_to_groups(*prompt, x, batch.seq_len);
  return {x, group_len, plen};
}

Var TinyTransformer::block(Tape& tape, Var x, std::size_t b, std::size_t group_len,
                           const ForwardHooks* hooks) const {
  auto p = [&](const char* role) { return bind(tape, block_param(b, role), hooks); };
  std::optional<KvPrefix> prefix = hooks ? hooks->kv_prefix(tape, b) : std::nullopt;
  std::optional<Var> pk, pv;
  if (prefix && prefix->k.value().rows() > 0) {
    if (prefix->k.value().rows() + group_len > config_.max_seq) {
      throw CapacityError(fmt::format("block {} prefix of {} rows plus sequence of {} exceeds max_seq {}",
                                      b, prefix->k.value().rows(), group_len, config_.max_seq));
    }
    pk = prefix->k;
    pv = prefix->v;
  }
  Var h = layer_norm(x, p("ln1.gain"), p("ln1.offset"));
  Var q = matmul(h, p("attn.wq"));
  Var k = matmul(h, p("attn.wk"));
  Var v = matmul(h, p("attn.wv"));
  Var a = attention(q, k, v, config_.n_heads, group_len, pk, pv);
  x = add(x, matmul(a, p("attn.wo")));
  Var h2 = layer_norm(x, p("ln2.gain"), p("ln2.offset"));
  Var f = relu(add_row(matmul(h2, p("ffn.w1")), p("ffn.b1")));
  f = add_row(matmul(f, p("ffn.w2")), p("ffn.b2"));
  x = add(x, f);
  return hooks ? hooks->after_ffn(tape, b, x) : x;
}

Var TinyTransformer::run_blocks(Tape& tape, Var x, std::size_t group_len, std::size_t first,
                                std::size_t last, const ForwardHooks* hooks) const {
  if (first > last || last > config_.n_blocks) throw UsageError("run_blocks: bad block range");
  for (std::size_t b = first; b < last; ++b) x = block(tape, x, b, group_len, hooks);
  return x;
}

Var TinyTransformer::final_norm(Tape& tape, Var x, const ForwardHooks* hooks) const {
  return layer_norm(x, bind(tape, "final_ln.gain", hooks), bind(tape, "final_ln.offset", hooks));
}

Var TinyTransformer::head(Tape& tape, Var h, const ForwardHooks* hooks) const {
  return add_row(matmul(h, bind(tape, "head.w", hooks)), bind(tape, "head.b", hooks));
}

Var TinyTransformer::forward(Tape& tape, std::span<const int> tokens, const ForwardHooks* hooks) const {
  TokenBatch batch{{tokens.begin(), tokens.end()}, tokens.size()};
  Embedded e = embed(tape, batch, hooks);
  Var x = run_blocks(tape, e.x, e.group_len, 0, config_.n_blocks, hooks);
  return head(tape, final_norm(tape, x, hooks), hooks);
}

std::vector<std::size_t> TinyTransformer::stream_rows(std::size_t group_len, std::size_t prompt_len,
                                                      std::span<const std::size_t> rows) {
  std::vector<std::size_t> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = i * group_len + prompt_len + rows[i];
  return out;
}

Var TinyTransformer::select_logits(Tape& tape, const TokenBatch& batch,
                                   std::span<const std::size_t> rows, const ForwardHooks* hooks) const {
  if (rows.size() != batch.count()) throw InputError("one selected row per sequence is required");
  for (std::size_t r : rows) {
    if (r >= batch.seq_len) throw InputError("selected row outside the sequence");
  }
  Embedded e = embed(tape, batch, hooks);
  Var x = run_blocks(tape, e.x, e.group_len, 0, config_.n_blocks, hooks);
  const auto stream = stream_rows(e.group_len, e.prompt_len, rows);
  // Row-wise ops commute with row selection, so the final norm and head only
  // run on the selected rows.
  return head(tape, final_norm(tape, gather_rows(x, stream), hooks), hooks);
}

TinyTransformer TinyTransformer::with_blocks(std::span<const std::size_t> keep) const {
  TransformerConfig cfg = config_;
  cfg.n_blocks = keep.size();
  ParameterStore out;
  out.add(params_.get("embed"));
  for (std::size_t nb = 0; nb < keep.size(); ++nb) {
    const std::size_t ob = keep[nb];
    if (ob >= config_.n_blocks) throw InputError("with_blocks: block index out of range");
    for (const Parameter& p : params_.items()) {
      if (p.block != static_cast<int>(ob)) continue;
      Parameter q = p;
      const std::string old_prefix = fmt::format("block{}.", ob);
      q.name = fmt::format("block{}.{}", nb, p.name.substr(old_prefix.size()));
      q.block = static_cast<int>(nb);
      out.add(std::move(q));
    }
  }
  for (const char* n : {"final_ln.gain", "final_ln.offset", "head.w", "head.b"}) out.add(params_.get(n));
  return TinyTransformer(cfg, std::move(out));
}

void TinyTransformer::load_values(const std::vector<std::pair<std::string, Tensor>>& values) {
  for (const auto& [name, t] : values) {
    Parameter& p = params_.get(name);
    if (p.value.shape() != t.shape()) {
      throw ShapeError(fmt::format("parameter '{}' has shape {}, checkpoint has {}", name,
                                   shape_string(p.value.shape()), shape_string(t.shape())));
    }
    p.value = t;
  }
}

}  // namespace deft::nn
