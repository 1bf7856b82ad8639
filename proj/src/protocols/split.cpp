// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/protocols/split.hpp"

#include <fmt/format.h>

#include "deft/error.hpp"
#include "deft/nn/flops.hpp"
#include "deft/nn/ops.hpp"
#include "deft/nn/optim.hpp"
#include "deft/peft/trainer.hpp"
#include "deft/tasks/batching.hpp"

namespace deft::protocols {

namespace {

using channel::LatencyKind;

constexpr const char* kBoundary = "split.boundary";

std::size_t prompt_len(const peft::PeftModel& m) { return m.spec().as<peft::PTuningSpec>().prompt_len; }

std::size_t model_download_coeffs(const peft::PeftModel& m, SplitKind kind) {
  std::size_t n = m.base().params().get("embed").value.size();
  if (kind == SplitKind::Adapter)
    for (const auto& p : m.base().params().items())
      if (p.block == 0) n += p.value.size();
  return n;
}

double evaluate(const peft::PeftModel& m, const tasks::SyntheticTask& task) {
  return tasks::precision(m.base(), &m, task.eval);
}

}  // namespace

nn::Tensor ideal_transport(const std::string&, PayloadKind, const nn::Tensor& payload) { return payload; }

SplitKind split_kind(const peft::PeftModel& model) {
  const peft::PeftSpec& s = model.spec();
  if (s.is<peft::PTuningSpec>() && s.as<peft::PTuningSpec>().prompt_len > 0) return SplitKind::PTuning;
  if (s.is<peft::AdapterSpec>() && s.as<peft::AdapterSpec>().blocks == std::vector<std::size_t>{0}) {
    return SplitKind::Adapter;
  }
  throw ConfigError(fmt::format("split fine-tuning needs P-tuning or a block-0 adapter, got {}", s.kind()));
}

SplitCost split_cost(const peft::PeftModel& model, std::size_t batch, std::size_t seq_len) {
  const nn::TransformerConfig& cfg = model.base().config();
  const std::size_t d = cfg.d_model;
  SplitCost c;
  double server_forward = nn::flops::head_forward(cfg, batch);
  if (split_kind(model) == SplitKind::PTuning) {
    const std::size_t l = prompt_len(model), group = l + seq_len;
    c.device_flops = nn::flops::with_backward(nn::flops::bilstm_forward(l, d));
    for (std::size_t b = 0; b < cfg.n_blocks; ++b) server_forward += nn::flops::block_forward(cfg, batch * group, group);
    c.upload_coeffs = l * d + batch * seq_len * d;
    c.download_coeffs = l * d;
  } else {
    const std::size_t rows = batch * seq_len, m = model.spec().as<peft::AdapterSpec>().bottleneck;
    c.device_flops = nn::flops::block_forward(cfg, rows, seq_len) +
                     nn::flops::with_backward(nn::flops::adapter_forward(rows, d, m));
    for (std::size_t b = 1; b < cfg.n_blocks; ++b) server_forward += nn::flops::block_forward(cfg, rows, seq_len);
    c.upload_coeffs = rows * d;
    c.download_coeffs = rows * d;
  }
  c.server_flops = nn::flops::with_backward(server_forward);
  return c;
}

DeviceForward device_forward(nn::Tape& tape, const peft::PeftModel& model, const tasks::ClozeBatch& b) {
  const nn::TinyTransformer& base = model.base();
  DeviceForward out;
  if (split_kind(model) == SplitKind::PTuning) {
    out.boundary = *model.prompt(tape);
    out.token_embeddings = base.token_embeddings(tape, b.tokens).value();
  } else {
    nn::Var x = base.token_embeddings(tape, b.tokens, &model);
    out.boundary = base.run_blocks(tape, x, b.tokens.seq_len, 0, 1, &model);
  }
  return out;
}

BoundaryPass server_boundary_pass(const nn::TinyTransformer& base, SplitKind kind, const nn::Tensor& boundary,
                                  const nn::Tensor& token_embeddings, const tasks::ClozeBatch& b) {
  nn::Tape tape;
  const std::size_t seq = b.tokens.seq_len;
  nn::Var cut = tape.leaf(kBoundary, boundary);
  nn::Var x = cut;
  std::size_t group_len = seq, plen = 0, first = 0;
  if (kind == SplitKind::PTuning) {
    plen = boundary.rows();
    group_len = plen + seq;
    if (group_len > base.config().max_seq) throw CapacityError("prompt plus sequence exceeds max_seq");
    x = nn::prepend_to_groups(cut, tape.constant(token_embeddings), seq);
  } else {
    first = 1;
  }
  x = base.run_blocks(tape, x, group_len, first, base.config().n_blocks);
  const auto stream = nn::TinyTransformer::stream_rows(group_len, plen, b.rows);
  nn::Var logits = base.head(tape, base.final_norm(tape, nn::gather_rows(x, stream)));
  nn::Var loss = nn::cross_entropy(logits, b.targets);
  BoundaryPass out;
  out.loss = loss.value().item();
  out.grad = std::move(tape.backward(loss).at(kBoundary));
  return out;
}

SplitStep split_step(const peft::PeftModel& model, std::span<const tasks::ClozeExample> batch,
                     const Transport& uplink, const Transport& downlink) {
  const SplitKind kind = split_kind(model);
  const nn::TinyTransformer& base = model.base();
  const tasks::ClozeBatch b = tasks::make_batch(batch);

  nn::Tape device;
  const DeviceForward fwd = device_forward(device, model, b);
  nn::Tensor boundary, tokens;
  if (kind == SplitKind::PTuning) {
    boundary = uplink("upload_prompt", PayloadKind::Prompt, fwd.boundary.value());
    tokens = uplink("upload_embeddings", PayloadKind::Embedding, fwd.token_embeddings);
  } else {
    boundary = uplink("upload_activations", PayloadKind::Embedding, fwd.boundary.value());
  }
  const BoundaryPass server = server_boundary_pass(base, kind, boundary, tokens, b);
  SplitStep step;
  step.loss = server.loss;
  step.boundary_grad = downlink("download_gradient", PayloadKind::Gradient, server.grad);
  step.grads = device.backward(fwd.boundary, step.boundary_grad);
  return step;
}

void SingleDeviceConfig::validate() const {
  if (epochs < 1 || iters_per_epoch < 1 || batch_size < 1) throw ConfigError("iteration counts must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  device.validate();
  link.validate();
}

TrainingRun run_single_device_deft(const nn::TinyTransformer& base, const tasks::SyntheticTask& task,
                                   const SingleDeviceConfig& cfg) {
  cfg.validate();
  TrainingRun run;
  run.model = std::make_unique<peft::PeftModel>(base, cfg.peft, cfg.seed);
  peft::PeftModel& model = *run.model;
  const SplitKind kind = split_kind(model);
  auto& ledger = run.ledger;
  auto& audit = run.audit;

  // Device -> server is audited; server -> device is not server-visible.
  const Transport uplink = [&](const std::string& phase, PayloadKind k, const nn::Tensor& t) {
    audit.record(phase, k, t.size());
    channel::Transmission tx = channel::digital_transmit(t, cfg.link);
    ledger.record(phase, LatencyKind::Comm, tx.seconds);
    return tx.received;
  };
  const Transport downlink = [&](const std::string& phase, PayloadKind, const nn::Tensor& t) {
    channel::Transmission tx = channel::digital_transmit(t, cfg.link);
    ledger.record(phase, LatencyKind::Comm, tx.seconds);
    return tx.received;
  };

  ledger.record("download_frozen_layers", LatencyKind::Comm,
                channel::digital_latency(model_download_coeffs(model, kind), cfg.link));

  TraceRecorder recorder(ledger);
  BatchStream stream(task.train, cfg.batch_size, cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t it = 0; it < cfg.iters_per_epoch; ++it) {
      const auto batch = stream.next();
      const SplitCost cost = split_cost(model, batch.size(), task.template_len);
      ledger.record("device_compute", LatencyKind::Compute,
                    cfg.compute.seconds(cost.device_flops, cfg.device.relative_compute_speed));
      SplitStep step = split_step(model, batch, uplink, [&](const std::string& phase, PayloadKind k, const nn::Tensor& t) {
        ledger.record("server_compute", LatencyKind::Compute, cfg.compute.seconds(cost.server_flops));
        return downlink(phase, k, t);
      });
      nn::sgd_step(model.params(), step.grads, cfg.learning_rate);
      loss_sum += step.loss;
    }
    recorder.push(epoch + 1, evaluate(model, task),
                  {{cfg.device.id, loss_sum / static_cast<double>(cfg.iters_per_epoch), 0.0}});
  }
  run.final_precision = recorder.traces().back().precision;
  run.traces = recorder.take();
  return run;
}

TrainingRun run_centralized_baseline(const nn::TinyTransformer& base, const tasks::SyntheticTask& task,
                                     const SingleDeviceConfig& cfg) {
  cfg.validate();
  TrainingRun run;
  run.model = std::make_unique<peft::PeftModel>(base, cfg.peft, cfg.seed);
  peft::PeftModel& model = *run.model;
  split_kind(model);
  auto& ledger = run.ledger;

  const std::size_t per_example = cfg.raw_coeffs_per_example ? cfg.raw_coeffs_per_example : task.template_len;
  const std::size_t raw = task.train.size() * per_example;
  run.audit.record("upload_raw_dataset", PayloadKind::RawData, raw);
  ledger.record("upload_raw_dataset", LatencyKind::Comm, channel::digital_latency(raw, cfg.link));

  TraceRecorder recorder(ledger);
  BatchStream stream(task.train, cfg.batch_size, cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t it = 0; it < cfg.iters_per_epoch; ++it) {
      const auto batch = stream.next();
      const SplitCost cost = split_cost(model, batch.size(), task.template_len);
      ledger.record("server_compute", LatencyKind::Compute, cfg.compute.seconds(cost.device_flops + cost.server_flops));
      peft::StepResult r = peft::loss_and_grads(model, batch);
      nn::sgd_step(model.params(), r.grads, cfg.learning_rate);
      loss_sum += r.loss;
    }
    recorder.push(epoch + 1, evaluate(model, task), {{0, loss_sum / static_cast<double>(cfg.iters_per_epoch), 0.0}});
  }
  run.final_precision = recorder.traces().back().precision;
  run.traces = recorder.take();
  return run;
}

}  // namespace deft::protocols
