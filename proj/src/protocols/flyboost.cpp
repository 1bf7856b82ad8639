// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/protocols/flyboost.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "deft/error.hpp"
#include "deft/nn/flops.hpp"
#include "deft/peft/trainer.hpp"
#include "deft/protocols/federated.hpp"
#include "deft/tasks/batching.hpp"

namespace deft::protocols {

namespace {

using channel::LatencyKind;
using Hits = std::vector<bool>;

std::vector<tasks::ClozeExample> blanks(std::span<const tasks::ReasoningPath> paths) {
  std::vector<tasks::ClozeExample> out;
  for (const auto& p : paths)
    for (const auto& s : p.slots) out.push_back({s.context, s.mask_pos, s.truth, 0});
  return out;
}

Hits prompt_hits(const nn::TinyTransformer& model, const nn::Tensor& prompt,
                 std::span<const tasks::ClozeExample> examples) {
  const FixedPrompt hooks(prompt);
  const nn::Tensor logits = tasks::mask_logits(model, &hooks, examples);
  Hits hits(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t v = 1; v < logits.cols(); ++v)
      if (logits.at(i, v) > logits.at(i, best)) best = v;
    hits[i] = static_cast<int>(best) == examples[i].answer;
  }
  return hits;
}

double fraction(const Hits& h) {
  return static_cast<double>(std::count(h.begin(), h.end(), true)) / static_cast<double>(h.size());
}

// Per-member, per-device hit vectors of the current ensemble; candidate
// ensembles are scored from these without rerunning the model.
class HitTable {
 public:
  HitTable(const nn::TinyTransformer& model, const std::vector<FlyBoostDevice>& devices) : model_(model) {
    for (const auto& d : devices) blanks_.push_back(blanks(d.paths));
  }

  std::vector<Hits> evaluate(const nn::Tensor& prompt) const {
    std::vector<Hits> out;
    for (const auto& b : blanks_) out.push_back(prompt_hits(model_, prompt, b));
    return out;
  }

  std::vector<double> scores(const std::vector<std::vector<Hits>>& members) const {
    std::vector<double> s;
    for (std::size_t d = 0; d < blanks_.size(); ++d) {
      Hits any(blanks_[d].size(), false);
      for (const auto& m : members)
        for (std::size_t i = 0; i < any.size(); ++i) any[i] = any[i] || m[d][i];
      s.push_back(fraction(any));
    }
    return s;
  }

  std::size_t total_blanks() const {
    std::size_t n = 0;
    for (const auto& b : blanks_) n += b.size();
    return n;
  }

 private:
  const nn::TinyTransformer& model_;
  std::vector<std::vector<tasks::ClozeExample>> blanks_;
};

bool no_drop(const std::vector<double>& before, const std::vector<double>& after) {
  for (std::size_t i = 0; i < before.size(); ++i)
    if (after[i] < before[i]) return false;
  return true;
}

double inference_flops(const nn::TinyTransformer& model, std::size_t prompt_len, std::size_t n_seqs,
                       std::size_t seq_len) {
  const nn::TransformerConfig& cfg = model.config();
  const std::size_t group = prompt_len + seq_len;
  double f = nn::flops::head_forward(cfg, n_seqs);
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) f += nn::flops::block_forward(cfg, n_seqs * group, group);
  return f;
}

}  // namespace

std::vector<bool> ensemble_hits(const nn::TinyTransformer& model, std::span<const nn::Tensor> prompts,
                                std::span<const tasks::ReasoningPath> paths) {
  if (prompts.empty()) throw InputError("empty prompt ensemble");
  const auto examples = blanks(paths);
  if (examples.empty()) throw InputError("no reasoning-path blanks to score");
  Hits any(examples.size(), false);
  for (const auto& p : prompts) {
    const Hits h = prompt_hits(model, p, examples);
    for (std::size_t i = 0; i < any.size(); ++i) any[i] = any[i] || h[i];
  }
  return any;
}

double flyboost_score(const nn::TinyTransformer& model, std::span<const nn::Tensor> prompts,
                      std::span<const tasks::ReasoningPath> paths) {
  return fraction(ensemble_hits(model, prompts, paths));
}

std::vector<std::size_t> schedule_importance(std::span<const double> scores, std::span<const double> gains,
                                             double weight) {
  if (scores.size() != gains.size()) throw InputError("one channel gain per device");
  if (weight < 0.0 || weight > 1.0) throw InputError("importance weight must lie in [0, 1]");
  double max_gain = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) throw InputError("scores must lie in [0, 1]");
    if (!(gains[i] > 0.0) || !std::isfinite(gains[i])) throw InputError("channel gains must be positive");
    max_gain = std::max(max_gain, gains[i]);
  }
  std::vector<double> metric(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    metric[i] = weight / std::max(scores[i], 1e-3) + (1.0 - weight) * gains[i] / max_gain;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return metric[a] > metric[b]; });
  return order;
}

void FlyBoostConfig::validate() const {
  if (!(threshold > 0.0) || threshold > 1.0) throw ConfigError("threshold must lie in (0, 1]");
  if (max_rounds < 1 || paths_per_device < 1 || path_depth < 1 || ensemble_cap < 1 || prompt_len < 1 ||
      local_epochs < 1 || batch_size < 1) {
    throw ConfigError("FlyBoosting counts must be >= 1");
  }
  if (importance_weight < 0.0 || importance_weight > 1.0) throw ConfigError("importance weight must lie in [0, 1]");
  if (!(learning_rate > 0.0) || !(device_speed > 0.0)) throw ConfigError("rates must be positive");
  link.validate();
}

FlyBoostRound flyboost_round(const nn::TinyTransformer& model, std::vector<FlyBoostDevice>& devices,
                             PromptEnsemble& ensemble, const FlyBoostConfig& cfg, channel::LatencyLedger& ledger,
                             PayloadAudit& audit) {
  if (ensemble.prompts.empty()) throw InputError("empty prompt ensemble");
  const HitTable table(model, devices);
  std::vector<std::vector<Hits>> members;
  for (const auto& p : ensemble.prompts) members.push_back(table.evaluate(p));
  const std::size_t plen = ensemble.prompts.front().rows();
  ledger.record("server_scoring", LatencyKind::Compute,
                cfg.compute.seconds(static_cast<double>(members.size()) *
                                    inference_flops(model, plen, table.total_blanks(), devices.front().task.template_len)));

  FlyBoostRound rec;
  rec.scores_before = table.scores(members);
  ensemble.scores = rec.scores_before;

  std::vector<std::size_t> below;
  std::vector<double> below_scores, below_gains;
  for (std::size_t k = 0; k < devices.size(); ++k) {
    if (rec.scores_before[k] < cfg.threshold) {
      below.push_back(k);
      below_scores.push_back(rec.scores_before[k]);
      below_gains.push_back(devices[k].channel_gain);
    }
  }
  const auto order = schedule_importance(below_scores, below_gains, cfg.importance_weight);
  const std::size_t n_selected = cfg.max_selected ? std::min(cfg.max_selected, below.size()) : below.size();
  std::vector<nn::Tensor> candidates;
  double slowest = 0.0;
  for (std::size_t i = 0; i < n_selected; ++i) {
    FlyBoostDevice& d = devices[below[order[i]]];
    rec.selected.push_back(d.id);
    const peft::TrainOptions opts{cfg.learning_rate, cfg.batch_size};
    for (std::size_t e = 0; e < cfg.local_epochs; ++e) peft::sgd_epoch(*d.encoder, d.task.train, opts, *d.rng);
    const double steps = std::ceil(static_cast<double>(d.task.train.size()) / static_cast<double>(cfg.batch_size)) *
                         static_cast<double>(cfg.local_epochs);
    slowest = std::max(slowest, cfg.compute.seconds(steps * training_flops(*d.encoder, cfg.batch_size, d.task.template_len),
                                                    cfg.device_speed));
    nn::Tape tape;
    candidates.push_back(d.encoder->prompt(tape)->value());
  }
  if (!candidates.empty()) {
    ledger.record("device_prompt_training", LatencyKind::Compute, slowest);
    channel::DigitalLinkConfig shared = cfg.link;
    shared.n_sharing_users = candidates.size();
    double seconds = 0.0;
    for (auto& c : candidates) {
      audit.record("upload_candidate_prompt", PayloadKind::Prompt, c.size());
      channel::Transmission t = channel::digital_transmit(c, shared);
      seconds = std::max(seconds, t.seconds);
      c = std::move(t.received);
    }
    ledger.record("upload_candidate_prompt", LatencyKind::Comm, seconds);
  }

  std::vector<double> scores = rec.scores_before;
  for (auto& c : candidates) {
    std::vector<Hits> hits = table.evaluate(c);
    auto trial = members;
    std::size_t slot = trial.size();
    if (trial.size() >= cfg.ensemble_cap) {
      // Member whose removal costs the least on the worst-affected device.
      double best_cost = 2.0;
      for (std::size_t j = 0; j < trial.size(); ++j) {
        auto without = trial;
        without.erase(without.begin() + static_cast<std::ptrdiff_t>(j));
        const auto s = without.empty() ? std::vector<double>(devices.size(), 0.0) : table.scores(without);
        double cost = 0.0;
        for (std::size_t k = 0; k < s.size(); ++k) cost = std::max(cost, scores[k] - s[k]);
        if (cost < best_cost) {
          best_cost = cost;
          slot = j;
        }
      }
      trial[slot] = hits;
    } else {
      trial.push_back(hits);
    }
    const auto after = table.scores(trial);
    if (!no_drop(scores, after)) continue;
    members = std::move(trial);
    if (slot == ensemble.prompts.size()) {
      ensemble.prompts.push_back(std::move(c));
    } else {
      ensemble.prompts[slot] = std::move(c);
    }
    scores = after;
    ++rec.accepted;
  }
  ensemble.scores = scores;
  rec.scores_after = scores;
  rec.ensemble_size = ensemble.prompts.size();
  return rec;
}

FlyBoostRun run_flyboost(const nn::TinyTransformer& model, std::vector<tasks::SyntheticTask> tasks,
                         const FlyBoostConfig& cfg) {
  cfg.validate();
  if (tasks.empty()) throw InputError("FlyBoosting needs at least one device");
  FlyBoostRun run;
  const peft::PeftSpec spec = peft::PTuningSpec{cfg.prompt_len};
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    FlyBoostDevice d;
    d.id = k;
    d.paths = tasks::gen_reasoning_paths(tasks[k], cfg.path_depth, cfg.paths_per_device, cfg.seed * 1000 + k);
    d.task = std::move(tasks[k]);
    d.encoder = std::make_unique<peft::PeftModel>(model, spec, cfg.seed + k);
    d.rng = std::make_unique<nn::Rng>(nn::Rng::stream(cfg.seed + k, "flyboost_local"));
    std::size_t coeffs = 0;
    for (const auto& p : d.paths)
      for (const auto& s : p.slots) coeffs += s.context.size();
    // The blanks the server fills are the reasoning-path contexts themselves.
    run.audit.record("upload_reasoning_paths", PayloadKind::RawData, coeffs);
    run.devices.push_back(std::move(d));
  }
  channel::DigitalLinkConfig shared = cfg.link;
  shared.n_sharing_users = run.devices.size();
  double seconds = 0.0;
  for (const auto& r : run.audit.records()) seconds = std::max(seconds, channel::digital_latency(r.n_coeffs, shared));
  run.ledger.record("upload_reasoning_paths", LatencyKind::Comm, seconds);

  run.ensemble.prompts.push_back(nn::Tensor({cfg.prompt_len, model.config().d_model}));
  TraceRecorder recorder(run.ledger);
  for (std::size_t r = 1; r <= cfg.max_rounds; ++r) {
    FlyBoostRound rec = flyboost_round(model, run.devices, run.ensemble, cfg, run.ledger, run.audit);
    rec.round = r;
    std::vector<DeviceMetric> metrics;
    double mean = 0.0;
    for (std::size_t k = 0; k < rec.scores_after.size(); ++k) {
      metrics.push_back({k, 0.0, rec.scores_after[k]});
      mean += rec.scores_after[k] / static_cast<double>(rec.scores_after.size());
    }
    recorder.push(r, mean, std::move(metrics));
    const bool done = rec.selected.empty();
    run.rounds.push_back(std::move(rec));
    if (done) break;
  }
  run.converged = std::all_of(run.ensemble.scores.begin(), run.ensemble.scores.end(),
                              [&](double s) { return s >= cfg.threshold; });
  run.traces = recorder.take();
  return run;
}

}  // namespace deft::protocols
