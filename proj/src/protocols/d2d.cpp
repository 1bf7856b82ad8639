// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/protocols/d2d.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "deft/error.hpp"
#include "deft/nn/flops.hpp"
#include "deft/nn/ops.hpp"
#include "deft/peft/trainer.hpp"
#include "deft/tasks/batching.hpp"

namespace deft::protocols {

namespace {

using channel::LatencyKind;

constexpr const char* kLogits = "attention.logits";

void check_sources(std::span<const nn::Tensor> sources, const AttentionState& state) {
  if (sources.empty()) throw InputError("no source prompts");
  for (const auto& p : sources) {
    if (p.shape() != sources.front().shape()) throw InputError("source prompts must share one shape");
  }
  if (state.n_sources() != sources.size()) {
    throw InputError(fmt::format("attention state covers {} sources, got {}", state.n_sources(), sources.size()));
  }
  if (state.mode == AttentionMode::PerCoefficient && state.logits.rows() != sources.front().size()) {
    throw InputError("per-coefficient attention does not match the prompt size");
  }
}

// Source k's upload: its prompt scaled by its attention weights.
std::vector<nn::Tensor> weighted_sources(std::span<const nn::Tensor> sources, const AttentionState& state) {
  check_sources(sources, state);
  const nn::Tensor a = state.weights();
  std::vector<nn::Tensor> out;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    nn::Tensor w = sources[k];
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] *= state.mode == AttentionMode::PerSource ? a.at(0, k) : a.at(i, k);
    out.push_back(std::move(w));
  }
  return out;
}

// Exact fusion recorded on the tape, differentiable in the logits leaf.
nn::Var fuse_on_tape(nn::Tape& tape, nn::Var logits, std::span<const nn::Tensor> sources, AttentionMode mode) {
  const nn::Shape shape = sources.front().shape();
  nn::Var a = nn::softmax_rows(logits);
  if (mode == AttentionMode::PerSource) {
    nn::Var fused = nn::scale_by(nn::slice_cols(a, 0, 1), tape.constant(sources[0]));
    for (std::size_t k = 1; k < sources.size(); ++k)
      fused = nn::add(fused, nn::scale_by(nn::slice_cols(a, k, 1), tape.constant(sources[k])));
    return fused;
  }
  const std::size_t n = sources.front().size(), k_src = sources.size();
  nn::Tensor stacked({n, k_src});
  for (std::size_t k = 0; k < k_src; ++k)
    for (std::size_t i = 0; i < n; ++i) stacked.at(i, k) = sources[k][i];
  nn::Var column = nn::matmul(nn::mul(a, tape.constant(stacked)), tape.constant(nn::Tensor::full({k_src, 1}, 1.0)));
  return nn::reshape(column, shape);
}

}  // namespace

AttentionState AttentionState::uniform(AttentionMode mode, std::size_t n_sources, std::size_t prompt_coeffs) {
  if (n_sources < 1) throw InputError("attention needs at least one source");
  AttentionState s;
  s.mode = mode;
  s.logits = nn::Tensor({mode == AttentionMode::PerSource ? std::size_t{1} : prompt_coeffs, n_sources});
  return s;
}

nn::Tensor AttentionState::weights() const {
  nn::Tape tape;
  return nn::softmax_rows(tape.constant(logits)).value();
}

nn::Tensor fuse_prompts(std::span<const nn::Tensor> sources, const AttentionState& state) {
  const auto parts = weighted_sources(sources, state);
  nn::Tensor fused(parts.front().shape());
  for (const auto& p : parts) fused += p;
  return fused;
}

nn::Tensor transmit_fusion(std::span<const nn::Tensor> sources, const AttentionState& state, const FusionLink& link,
                           nn::Rng& rng, channel::LatencyLedger& ledger, PayloadAudit& audit) {
  const auto parts = weighted_sources(sources, state);
  const std::size_t k = parts.size();
  channel::DigitalLinkConfig full = link.digital;
  full.n_sharing_users = 1;
  ledger.record("broadcast_attention", LatencyKind::Comm, channel::digital_latency(state.logits.size(), full));
  for (const auto& p : parts) audit.record("upload_weighted_prompt", PayloadKind::Prompt, p.size());
  if (link.kind == LinkKind::AirComp) {
    channel::Transmission t = channel::aircomp_aggregate(parts, link.aircomp, rng);
    ledger.record("upload_weighted_prompt", LatencyKind::Comm, t.seconds);
    return std::move(t.received);
  }
  channel::DigitalLinkConfig shared = link.digital;
  shared.n_sharing_users = k;
  nn::Tensor sum(parts.front().shape());
  double seconds = 0.0;
  for (const auto& p : parts) {
    channel::Transmission t = channel::digital_transmit(p, shared);
    seconds = std::max(seconds, t.seconds);
    sum += t.received;
  }
  ledger.record("upload_weighted_prompt", LatencyKind::Comm, seconds);
  return sum;
}

FuseStep d2d_fuse(const nn::TinyTransformer& model, std::span<const nn::Tensor> sources, AttentionState& state,
                  std::span<const tasks::ClozeExample> batch, const FusionLink& link, const FuseOptions& options,
                  nn::Rng& rng, channel::LatencyLedger& ledger, PayloadAudit& audit) {
  check_sources(sources, state);
  if (batch.empty()) throw InputError("empty target batch");
  FuseStep step;
  step.fused = transmit_fusion(sources, state, link, rng, ledger, audit);

  // The target device embeds its batch with the frozen table and sends the
  // embeddings up; the server runs the model with the fused prompt.
  const tasks::ClozeBatch b = tasks::make_batch(batch);
  nn::Tape tape;
  const nn::Tensor tokens = model.token_embeddings(tape, b.tokens).value();
  audit.record("upload_target_embeddings", PayloadKind::Embedding, tokens.size());
  ledger.record("upload_target_embeddings", LatencyKind::Comm, channel::digital_latency(tokens.size(), link.digital));

  nn::Var logits = tape.leaf(kLogits, state.logits);
  nn::Var exact = fuse_on_tape(tape, logits, sources, state.mode);
  nn::Tensor offset = step.fused;
  offset -= exact.value();
  nn::Var prompt = nn::add(exact, tape.constant(std::move(offset)));
  const std::size_t plen = prompt.value().rows(), seq = b.tokens.seq_len, group = plen + seq;
  if (group > model.config().max_seq) throw CapacityError("prompt plus sequence exceeds max_seq");
  nn::Var x = nn::prepend_to_groups(prompt, tape.constant(tokens), seq);
  x = model.run_blocks(tape, x, group, 0, model.config().n_blocks);
  const auto rows = nn::TinyTransformer::stream_rows(group, plen, b.rows);
  nn::Var out = model.head(tape, model.final_norm(tape, nn::gather_rows(x, rows)));
  nn::Var loss = nn::cross_entropy(out, b.targets);
  step.loss = loss.value().item();
  const nn::GradMap grads = tape.backward(loss);
  const nn::Tensor& g = grads.at(kLogits);
  const double norm = nn::frobenius_norm(g);
  double lr = options.learning_rate;
  if (options.max_grad_norm > 0.0 && norm > options.max_grad_norm) lr *= options.max_grad_norm / norm;
  for (std::size_t i = 0; i < state.logits.size(); ++i) state.logits[i] -= lr * g[i];

  const nn::TransformerConfig& cfg = model.config();
  double flops = nn::flops::head_forward(cfg, batch.size());
  for (std::size_t blk = 0; blk < cfg.n_blocks; ++blk)
    flops += nn::flops::block_forward(cfg, batch.size() * group, group);
  ledger.record("server_compute", LatencyKind::Compute, ComputeModel{}.seconds(nn::flops::with_backward(flops)));
  return step;
}

void D2DConfig::validate() const {
  if (n_sources < 1 || prompt_len < 1 || epochs < 1 || iters_per_epoch < 1 || batch_size < 1 ||
      source_epochs < 1 || relations_per_task < 1) {
    throw ConfigError("D2D counts must be >= 1");
  }
  if (!(fuse.learning_rate > 0.0) || !(source_learning_rate > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (fuse.max_grad_norm < 0.0) throw ConfigError("max_grad_norm must be >= 0");
  link.digital.validate();
  link.aircomp.validate();
}

SourcePrompts train_source_prompts(const nn::TinyTransformer& model, const tasks::World& world,
                                   const D2DConfig& cfg) {
  cfg.validate();
  SourcePrompts out;
  const std::size_t families = world.config().n_families;
  for (std::size_t k = 0; k < cfg.n_sources; ++k) {
    tasks::ClozeOptions opts;
    opts.family = k % families;
    out.tasks.push_back(tasks::gen_cloze_task(world, cfg.seed * 100 + k, cfg.relations_per_task, opts));
    peft::PeftModel encoder(model, peft::PTuningSpec{cfg.prompt_len}, cfg.seed + k);
    nn::Rng rng = nn::Rng::stream(cfg.seed + k, "d2d_source");
    for (std::size_t e = 0; e < cfg.source_epochs; ++e)
      peft::sgd_epoch(encoder, out.tasks.back().train, {cfg.source_learning_rate, cfg.batch_size}, rng);
    nn::Tape tape;
    out.prompts.push_back(encoder.prompt(tape)->value());
  }
  return out;
}

D2DRun run_d2d(const nn::TinyTransformer& model, std::span<const nn::Tensor> sources,
               const tasks::SyntheticTask& target, const D2DConfig& cfg) {
  cfg.validate();
  if (sources.size() != cfg.n_sources) throw InputError("source count does not match the configuration");
  D2DRun run;
  run.attention = AttentionState::uniform(cfg.mode, sources.size(), sources.front().size());
  check_sources(sources, run.attention);
  nn::Rng channel_rng = nn::Rng::stream(cfg.seed, "d2d_channel");
  nn::Rng eval_rng = nn::Rng::stream(cfg.seed, "d2d_eval_channel");
  BatchStream stream(target.train, cfg.batch_size, cfg.seed);
  TraceRecorder recorder(run.ledger);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss = 0.0;
    for (std::size_t it = 0; it < cfg.iters_per_epoch; ++it) {
      const auto batch = stream.next();
      loss += d2d_fuse(model, sources, run.attention, batch, cfg.link, cfg.fuse, channel_rng, run.ledger,
                       run.audit)
                  .loss /
              static_cast<double>(cfg.iters_per_epoch);
    }
    // Evaluation transfers are not charged to the training ledger.
    channel::LatencyLedger scratch;
    PayloadAudit scratch_audit;
    const FixedPrompt prompt(transmit_fusion(sources, run.attention, cfg.link, eval_rng, scratch, scratch_audit));
    recorder.push(epoch + 1, tasks::precision(model, &prompt, target.eval), {{0, loss, 0.0}});
    run.cumulative_transfer_comm.push_back(run.ledger.phase_total("broadcast_attention") +
                                           run.ledger.phase_total("upload_weighted_prompt"));
  }
  run.final_precision = recorder.traces().back().precision;
  run.traces = recorder.take();
  return run;
}

}  // namespace deft::protocols
