// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/protocols/federated.hpp"

#include <algorithm>
#include <cmath>

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

void check_synchrony(const std::vector<FederatedDevice>& devices) {
  for (std::size_t k = 1; k < devices.size(); ++k) {
    if (!same_trainable(devices[0].model->params(), devices[k].model->params())) {
      throw ConsistencyError(fmt::format("device {} diverged from device 0", devices[k].profile.id));
    }
  }
}

double slowest_device(const std::vector<FederatedDevice>& devices, const ComputeModel& compute,
                      const std::vector<double>& flops) {
  double worst = 0.0;
  for (std::size_t k = 0; k < devices.size(); ++k)
    worst = std::max(worst, compute.seconds(flops[k], devices[k].profile.relative_compute_speed));
  return worst;
}

// Simultaneous FDMA uploads of per-device tensors; returns what arrives.
std::vector<nn::Tensor> fdma_uplink(const std::vector<nn::Tensor>& payloads, const RoundContext& ctx,
                                    const std::string& phase, PayloadKind kind) {
  channel::DigitalLinkConfig shared = ctx.link.digital;
  shared.n_sharing_users = payloads.size();
  std::vector<nn::Tensor> out;
  double seconds = 0.0;
  for (const auto& p : payloads) {
    ctx.audit.record(phase, kind, p.size());
    channel::Transmission t = channel::digital_transmit(p, shared);
    seconds = std::max(seconds, t.seconds);
    out.push_back(std::move(t.received));
  }
  ctx.ledger.record(phase, LatencyKind::Comm, seconds);
  return out;
}

nn::Tensor broadcast(const nn::Tensor& payload, const RoundContext& ctx, const std::string& phase) {
  channel::DigitalLinkConfig full = ctx.link.digital;
  full.n_sharing_users = 1;
  channel::Transmission t = channel::digital_transmit(payload, full);
  ctx.ledger.record(phase, LatencyKind::Comm, t.seconds);
  return t.received;
}

nn::Tensor stack_rows(const std::vector<nn::Tensor>& parts) {
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.rows();
  nn::Tensor out({rows, parts.front().cols()});
  std::size_t pos = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.data().begin() + static_cast<std::ptrdiff_t>(pos));
    pos += p.size();
  }
  return out;
}

}  // namespace

Emulator compress_emulator(const nn::TinyTransformer& model, double keep_fraction) {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) throw ConfigError("keep_fraction must lie in (0, 1]");
  const std::size_t n = model.config().n_blocks;
  // The small slack keeps products such as 0.2 * 10 from rounding up.
  const auto keep = static_cast<std::size_t>(
      std::clamp(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9), 1.0, static_cast<double>(n)));
  std::vector<std::size_t> kept;
  if (keep == 1) {
    kept.push_back(0);
  } else {
    for (std::size_t i = 0; i < keep; ++i)
      kept.push_back(static_cast<std::size_t>(
          std::llround(static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(keep - 1))));
  }
  Emulator e{model.with_blocks(kept), kept, 1.0};
  e.parameter_ratio = static_cast<double>(e.model.params().scalar_count()) /
                      static_cast<double>(model.params().scalar_count());
  return e;
}

double training_flops(const peft::PeftModel& model, std::size_t batch, std::size_t seq_len) {
  const nn::TransformerConfig& cfg = model.base().config();
  std::size_t plen = 0;
  double extra = 0.0;
  for (const auto& leaf : peft::flatten(model.spec())) {
    if (leaf.is<peft::PTuningSpec>()) {
      plen += leaf.as<peft::PTuningSpec>().prompt_len;
      extra += nn::flops::bilstm_forward(leaf.as<peft::PTuningSpec>().prompt_len, cfg.d_model);
    }
  }
  const std::size_t group = plen + seq_len;
  for (const auto& leaf : peft::flatten(model.spec())) {
    if (leaf.is<peft::AdapterSpec>()) {
      const auto& a = leaf.as<peft::AdapterSpec>();
      extra += static_cast<double>(a.blocks.size()) * nn::flops::adapter_forward(batch * group, cfg.d_model, a.bottleneck);
    }
  }
  double fwd = nn::flops::head_forward(cfg, batch) + extra;
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) fwd += nn::flops::block_forward(cfg, batch * group, group);
  return nn::flops::with_backward(fwd);
}

FederatedRound federated_emulator_round(std::vector<FederatedDevice>& devices, const RoundContext& ctx) {
  if (devices.empty()) throw InputError("federated round without devices");
  FederatedRound out;
  std::vector<nn::Tensor> grads;
  std::vector<double> flops;
  for (auto& d : devices) {
    const auto batch = d.batches->next();
    peft::StepResult r = peft::loss_and_grads(*d.model, batch);
    out.device_losses.push_back(r.loss);
    grads.push_back(flatten_grads(d.model->params(), r.grads));
    flops.push_back(training_flops(*d.model, batch.size(), batch.front().tokens.size()));
  }
  ctx.ledger.record("device_compute", LatencyKind::Compute, slowest_device(devices, ctx.compute, flops));
  for (const auto& g : grads) ctx.audit.record("upload_gradient", PayloadKind::Gradient, g.size());
  const nn::Tensor mean =
      mean_over_uplink(grads, ctx.link.kind, ctx.link.digital, ctx.link.aircomp, ctx.rng, ctx.ledger, "upload_gradient");
  out.aggregate = broadcast(mean, ctx, "broadcast_gradient");
  const nn::GradMap update = unflatten_grads(devices.front().model->params(), out.aggregate);
  for (auto& d : devices) nn::sgd_step(d.model->params(), update, ctx.learning_rate);
  check_synchrony(devices);
  for (double l : out.device_losses) out.mean_loss += l / static_cast<double>(devices.size());
  return out;
}

FederatedRound federated_server_assisted_round(std::vector<FederatedDevice>& devices, const RoundContext& ctx) {
  if (devices.empty()) throw InputError("federated round without devices");
  const SplitKind kind = split_kind(*devices.front().model);
  if (kind == SplitKind::Adapter && ctx.link.kind == LinkKind::AirComp) {
    throw ConfigError("adapter outputs belong to distinct samples and cannot be superposed over the air");
  }
  const std::size_t k = devices.size();
  std::vector<std::unique_ptr<nn::Tape>> tapes;
  std::vector<DeviceForward> fwd;
  std::vector<tasks::ClozeExample> pooled;
  std::vector<std::size_t> sizes;
  std::vector<double> flops;
  for (auto& d : devices) {
    if (split_kind(*d.model) != kind) throw ConfigError("all devices must use the same technique");
    const auto batch = d.batches->next();
    tapes.push_back(std::make_unique<nn::Tape>());
    fwd.push_back(device_forward(*tapes.back(), *d.model, tasks::make_batch(batch)));
    pooled.insert(pooled.end(), batch.begin(), batch.end());
    sizes.push_back(batch.size());
    flops.push_back(split_cost(*d.model, batch.size(), batch.front().tokens.size()).device_flops);
  }
  ctx.ledger.record("device_compute", LatencyKind::Compute, slowest_device(devices, ctx.compute, flops));

  const tasks::ClozeBatch pooled_batch = tasks::make_batch(pooled);
  const peft::PeftModel& reference = *devices.front().model;
  const double server_flops = split_cost(reference, pooled.size(), pooled_batch.tokens.seq_len).server_flops;
  FederatedRound out;
  std::vector<nn::Tensor> boundary_grads(k);
  if (kind == SplitKind::PTuning) {
    std::vector<nn::Tensor> prompts, tokens;
    for (const auto& f : fwd) {
      prompts.push_back(f.boundary.value());
      tokens.push_back(f.token_embeddings);
      ctx.audit.record("upload_prompt", PayloadKind::Prompt, f.boundary.value().size());
    }
    const nn::Tensor prompt = mean_over_uplink(prompts, ctx.link.kind, ctx.link.digital, ctx.link.aircomp, ctx.rng,
                                               ctx.ledger, "upload_prompt");
    const nn::Tensor embeddings = stack_rows(fdma_uplink(tokens, ctx, "upload_embeddings", PayloadKind::Embedding));
    const BoundaryPass server = server_boundary_pass(reference.base(), kind, prompt, embeddings, pooled_batch);
    ctx.ledger.record("server_compute", LatencyKind::Compute, ctx.compute.seconds(server_flops));
    out.mean_loss = server.loss;
    out.aggregate = broadcast(server.grad, ctx, "broadcast_gradient");
    std::fill(boundary_grads.begin(), boundary_grads.end(), out.aggregate);
  } else {
    std::vector<nn::Tensor> acts;
    for (const auto& f : fwd) acts.push_back(f.boundary.value());
    const nn::Tensor stacked = stack_rows(fdma_uplink(acts, ctx, "upload_activations", PayloadKind::Embedding));
    const BoundaryPass server = server_boundary_pass(reference.base(), kind, stacked, {}, pooled_batch);
    ctx.ledger.record("server_compute", LatencyKind::Compute, ctx.compute.seconds(server_flops));
    out.mean_loss = server.loss;
    // Slice k is rescaled to the gradient of device k's own mean loss.
    std::vector<nn::Tensor> slices;
    std::size_t row = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t rows = fwd[i].boundary.value().rows();
      nn::Tensor s({rows, stacked.cols()});
      const double factor = static_cast<double>(pooled.size()) / static_cast<double>(sizes[i]);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < s.cols(); ++c) s.at(r, c) = server.grad.at(row + r, c) * factor;
      row += rows;
      slices.push_back(std::move(s));
    }
    channel::DigitalLinkConfig shared = ctx.link.digital;
    shared.n_sharing_users = k;
    double seconds = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      channel::Transmission t = channel::digital_transmit(slices[i], shared);
      seconds = std::max(seconds, t.seconds);
      boundary_grads[i] = std::move(t.received);
    }
    ctx.ledger.record("download_gradient", LatencyKind::Comm, seconds);
  }
  for (std::size_t i = 0; i < k; ++i) {
    const nn::GradMap g = tapes[i]->backward(fwd[i].boundary, boundary_grads[i]);
    nn::sgd_step(devices[i].model->params(), g, ctx.learning_rate);
    out.device_losses.push_back(out.mean_loss);
  }
  if (kind == SplitKind::PTuning) check_synchrony(devices);
  return out;
}

void FederatedConfig::validate() const {
  if (n_devices < 1 || epochs < 1 || iters_per_epoch < 1 || batch_size < 1) {
    throw ConfigError("federated counts must be >= 1");
  }
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) throw ConfigError("keep_fraction must lie in (0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(device_speed > 0.0)) throw ConfigError("device speed must be positive");
  link.digital.validate();
  if (link.kind == LinkKind::AirComp) link.aircomp.validate();
}

FederatedRun run_federated(const nn::TinyTransformer& base, const tasks::SyntheticTask& task,
                           const FederatedConfig& cfg) {
  cfg.validate();
  FederatedRun run;
  const auto shards = tasks::split_shards(task.train, cfg.n_devices, cfg.shard_mode, cfg.seed);
  const bool emulated = cfg.paradigm == FederatedParadigm::Emulator;
  if (emulated) run.emulator = compress_emulator(base, cfg.keep_fraction);
  const nn::TinyTransformer& device_base = emulated ? run.emulator->model : base;

  for (std::size_t k = 0; k < cfg.n_devices; ++k) {
    FederatedDevice d;
    d.profile = {k, cfg.device_speed, cfg.seed + k};
    d.model = std::make_unique<peft::PeftModel>(device_base, cfg.peft, cfg.seed);
    d.batches = std::make_unique<BatchStream>(shards[k].examples, cfg.batch_size, cfg.seed * 1000 + k);
    run.devices.push_back(std::move(d));
  }
  if (!emulated) split_kind(*run.devices.front().model);

  // One-time broadcast of what devices need locally: the emulator, or the
  // frozen layers below the cut.
  std::size_t download = device_base.params().get("embed").value.size();
  if (emulated) {
    download = device_base.params().scalar_count();
  } else if (split_kind(*run.devices.front().model) == SplitKind::Adapter) {
    for (const auto& p : base.params().items())
      if (p.block == 0) download += p.value.size();
  }
  run.ledger.record("download_model", LatencyKind::Comm, channel::digital_latency(download, cfg.link.digital));

  peft::PeftModel evaluator(base, cfg.peft, cfg.seed);
  nn::Rng rng = nn::Rng::stream(cfg.seed, "federated_channel");
  const RoundContext ctx{cfg.link, cfg.compute, cfg.learning_rate, rng, run.ledger, run.audit};
  TraceRecorder recorder(run.ledger);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<double> loss(cfg.n_devices, 0.0);
    for (std::size_t it = 0; it < cfg.iters_per_epoch; ++it) {
      const FederatedRound r = emulated ? federated_emulator_round(run.devices, ctx)
                                        : federated_server_assisted_round(run.devices, ctx);
      for (std::size_t k = 0; k < cfg.n_devices; ++k) loss[k] += r.device_losses[k] / static_cast<double>(cfg.iters_per_epoch);
    }
    // Synchronized devices share one state; adapter devices are averaged.
    const bool shared = emulated || split_kind(*run.devices.front().model) == SplitKind::PTuning;
    double precision = 0.0;
    for (const auto& d : run.devices) {
      copy_trainable(d.model->params(), evaluator.params());
      const double p = tasks::precision(base, &evaluator, task.eval);
      if (shared) {
        precision = p;
        break;
      }
      precision += p / static_cast<double>(cfg.n_devices);
    }
    std::vector<DeviceMetric> metrics;
    for (std::size_t k = 0; k < cfg.n_devices; ++k) metrics.push_back({k, loss[k], 0.0});
    recorder.push(epoch + 1, precision, std::move(metrics));
  }
  run.final_precision = recorder.traces().back().precision;
  run.traces = recorder.take();
  return run;
}

}  // namespace deft::protocols
