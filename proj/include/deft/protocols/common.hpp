// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deft/channel/aircomp.hpp"
#include "deft/channel/digital.hpp"
#include "deft/channel/latency.hpp"
#include "deft/nn/tape.hpp"
#include "deft/peft/peft_model.hpp"
#include "deft/tasks/cloze.hpp"

namespace deft::protocols {

struct DeviceProfile {
  std::size_t id = 0;
  double relative_compute_speed = 1.0 / 50.0;  // multiple of the server's speed
  std::uint64_t channel_seed = 0;

  void validate() const;
};

// Compute latency = flops / (server_flops * relative speed).
struct ComputeModel {
  double server_flops = 1e9;

  double seconds(double flops, double relative_speed = 1.0) const;
};

// What crosses the device/server boundary, by category. Raw samples only
// ever appear in the centralized baseline.
enum class PayloadKind { RawData, Embedding, Prompt, Gradient, Parameter };

const char* to_string(PayloadKind k);

struct PayloadRecord {
  std::string phase;
  PayloadKind kind = PayloadKind::Embedding;
  std::size_t n_coeffs = 0;
};

// Server-visible interface log.
class PayloadAudit {
 public:
  void record(std::string phase, PayloadKind kind, std::size_t n_coeffs);
  const std::vector<PayloadRecord>& records() const { return records_; }
  bool contains(PayloadKind kind) const;
  std::size_t total_coeffs(PayloadKind kind) const;

 private:
  std::vector<PayloadRecord> records_;
};

enum class LinkKind { Digital, AirComp };

struct DeviceMetric {
  std::size_t device = 0;
  double loss = 0.0;
  double score = 0.0;
};

struct RoundTrace {
  std::size_t round = 0;
  std::vector<DeviceMetric> devices;
  double precision = 0.0;
  double comm_seconds = 0.0;     // ledger delta for this round
  double compute_seconds = 0.0;
  double cumulative_comm = 0.0;
  double cumulative_total = 0.0;
};

void to_json(nlohmann::json& j, const RoundTrace& t);

// One RoundTrace per line.
void write_trace_jsonl(std::ostream& out, const std::vector<RoundTrace>& traces);

// Appends a trace whose deltas are measured against the ledger totals at the
// previous trace.
class TraceRecorder {
 public:
  explicit TraceRecorder(const channel::LatencyLedger& ledger) : ledger_(ledger) {}
  RoundTrace& push(std::size_t round, double precision, std::vector<DeviceMetric> devices = {});
  const std::vector<RoundTrace>& traces() const { return traces_; }
  std::vector<RoundTrace> take() { return std::move(traces_); }

 private:
  const channel::LatencyLedger& ledger_;
  std::vector<RoundTrace> traces_;
  double last_comm_ = 0.0, last_compute_ = 0.0;
};

// Endless minibatches over a fixed example set: shuffled each pass,
// reshuffled when exhausted. The last batch of a pass may be short.
class BatchStream {
 public:
  BatchStream(std::vector<tasks::ClozeExample> examples, std::size_t batch_size, std::uint64_t seed);
  std::vector<tasks::ClozeExample> next();

 private:
  std::vector<tasks::ClozeExample> examples_;
  std::size_t batch_size_;
  nn::Rng rng_;
  std::size_t pos_ = 0;
};

// Gradients laid out as one flat vector in parameter-store order, so they can
// travel over a link and be restored.
nn::Tensor flatten_grads(const nn::ParameterStore& params, const nn::GradMap& grads);
nn::GradMap unflatten_grads(const nn::ParameterStore& params, const nn::Tensor& flat);
std::size_t trainable_size(const nn::ParameterStore& params);

// Trainable values, in store order.
nn::Tensor flatten_values(const nn::ParameterStore& params);
void copy_trainable(const nn::ParameterStore& from, nn::ParameterStore& to);
bool same_trainable(const nn::ParameterStore& a, const nn::ParameterStore& b);

// Runs an uplink of K payloads to the server and returns what the server
// receives: their mean, either from K FDMA digital uploads (simultaneous, each
// on bandwidth / K) or one AirComp aggregation. Latency is recorded once.
nn::Tensor mean_over_uplink(std::span<const nn::Tensor> payloads, LinkKind link,
                            const channel::DigitalLinkConfig& digital, const channel::AirCompConfig& aircomp,
                            nn::Rng& rng, channel::LatencyLedger& ledger, const std::string& phase);

// A soft prompt that is not trained here.
class FixedPrompt : public nn::ForwardHooks {
 public:
  explicit FixedPrompt(nn::Tensor prompt) : prompt_(std::move(prompt)) {}
  std::optional<nn::Var> prompt(nn::Tape& tape) const override { return tape.constant(prompt_); }

 private:
  nn::Tensor prompt_;
};

// A prompt already recorded on the tape the forward pass runs on.
class TapePrompt : public nn::ForwardHooks {
 public:
  explicit TapePrompt(nn::Var prompt) : prompt_(prompt) {}
  std::optional<nn::Var> prompt(nn::Tape&) const override { return prompt_; }

 private:
  nn::Var prompt_;
};

}  // namespace deft::protocols
