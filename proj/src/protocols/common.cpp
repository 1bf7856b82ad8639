// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/protocols/common.hpp"

#include <ostream>

#include <fmt/format.h>

#include "deft/error.hpp"

namespace deft::protocols {

void DeviceProfile::validate() const {
  if (!(relative_compute_speed > 0.0)) throw ConfigError("device compute speed must be positive");
}

double ComputeModel::seconds(double flops, double relative_speed) const {
  if (!(server_flops > 0.0) || !(relative_speed > 0.0)) throw ConfigError("compute speeds must be positive");
  return flops / (server_flops * relative_speed);
}

const char* to_string(PayloadKind k) {
  switch (k) {
    case PayloadKind::RawData: return "raw_data";
    case PayloadKind::Embedding: return "embedding";
    case PayloadKind::Prompt: return "prompt";
    case PayloadKind::Gradient: return "gradient";
    case PayloadKind::Parameter: return "parameter";
  }
  return "?";
}

void PayloadAudit::record(std::string phase, PayloadKind kind, std::size_t n_coeffs) {
  records_.push_back({std::move(phase), kind, n_coeffs});
}

bool PayloadAudit::contains(PayloadKind kind) const {
  for (const auto& r : records_)
    if (r.kind == kind) return true;
  return false;
}

std::size_t PayloadAudit::total_coeffs(PayloadKind kind) const {
  std::size_t n = 0;
  for (const auto& r : records_)
    if (r.kind == kind) n += r.n_coeffs;
  return n;
}

void to_json(nlohmann::json& j, const RoundTrace& t) {
  nlohmann::json devices = nlohmann::json::array();
  for (const auto& d : t.devices) devices.push_back({{"device", d.device}, {"loss", d.loss}, {"score", d.score}});
  j = {{"round", t.round},
       {"devices", devices},
       {"precision", t.precision},
       {"comm_seconds", t.comm_seconds},
       {"compute_seconds", t.compute_seconds},
       {"cumulative_comm", t.cumulative_comm},
       {"cumulative_total", t.cumulative_total}};
}

void write_trace_jsonl(std::ostream& out, const std::vector<RoundTrace>& traces) {
  for (const auto& t : traces) out << nlohmann::json(t).dump() << '\n';
}

RoundTrace& TraceRecorder::push(std::size_t round, double precision, std::vector<DeviceMetric> devices) {
  if (precision < 0.0 || precision > 1.0) throw ConsistencyError("precision outside [0, 1]");
  RoundTrace t;
  t.round = round;
  t.devices = std::move(devices);
  t.precision = precision;
  const double comm = ledger_.total(channel::LatencyKind::Comm);
  const double compute = ledger_.total(channel::LatencyKind::Compute);
  t.comm_seconds = comm - last_comm_;
  t.compute_seconds = compute - last_compute_;
  t.cumulative_comm = comm;
  t.cumulative_total = ledger_.total();
  last_comm_ = comm;
  last_compute_ = compute;
  traces_.push_back(std::move(t));
  return traces_.back();
}

BatchStream::BatchStream(std::vector<tasks::ClozeExample> examples, std::size_t batch_size, std::uint64_t seed)
    : examples_(std::move(examples)), batch_size_(batch_size), rng_(nn::Rng::stream(seed, "batches")) {
  if (examples_.empty()) throw InputError("batch stream over an empty example set");
  if (batch_size_ < 1) throw ConfigError("batch size must be >= 1");
  rng_.shuffle(examples_.begin(), examples_.end());
}

std::vector<tasks::ClozeExample> BatchStream::next() {
  if (pos_ >= examples_.size()) {
    rng_.shuffle(examples_.begin(), examples_.end());
    pos_ = 0;
  }
  const std::size_t n = std::min(batch_size_, examples_.size() - pos_);
  std::vector<tasks::ClozeExample> out(examples_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                       examples_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return out;
}

std::size_t trainable_size(const nn::ParameterStore& params) {
  std::size_t n = 0;
  for (const auto& p : params.items())
    if (p.trainable) n += p.value.size();
  return n;
}

nn::Tensor flatten_grads(const nn::ParameterStore& params, const nn::GradMap& grads) {
  nn::Tensor flat({trainable_size(params)});
  std::size_t pos = 0;
  for (const auto& p : params.items()) {
    if (!p.trainable) continue;
    auto it = grads.find(p.name);
    if (it != grads.end()) {
      if (it->second.shape() != p.value.shape()) throw ShapeError(fmt::format("gradient shape for '{}'", p.name));
      std::copy(it->second.values().begin(), it->second.values().end(), flat.data().begin() + static_cast<std::ptrdiff_t>(pos));
    }
    pos += p.value.size();
  }
  return flat;
}

nn::GradMap unflatten_grads(const nn::ParameterStore& params, const nn::Tensor& flat) {
  if (flat.size() != trainable_size(params)) throw ShapeError("flat gradient does not match the parameter set");
  nn::GradMap out;
  std::size_t pos = 0;
  for (const auto& p : params.items()) {
    if (!p.trainable) continue;
    nn::Tensor g(p.value.shape());
    std::copy(flat.values().begin() + static_cast<std::ptrdiff_t>(pos),
              flat.values().begin() + static_cast<std::ptrdiff_t>(pos + p.value.size()), g.data().begin());
    out.emplace(p.name, std::move(g));
    pos += p.value.size();
  }
  return out;
}

nn::Tensor flatten_values(const nn::ParameterStore& params) {
  nn::GradMap values;
  for (const auto& p : params.items())
    if (p.trainable) values.emplace(p.name, p.value);
  return flatten_grads(params, values);
}

void copy_trainable(const nn::ParameterStore& from, nn::ParameterStore& to) {
  for (const auto& p : from.items()) {
    if (!p.trainable) continue;
    nn::Parameter& q = to.get(p.name);
    if (q.value.shape() != p.value.shape()) throw ShapeError(fmt::format("cannot copy '{}'", p.name));
    q.value = p.value;
  }
}

bool same_trainable(const nn::ParameterStore& a, const nn::ParameterStore& b) {
  for (const auto& p : a.items()) {
    if (!p.trainable) continue;
    const nn::Parameter* q = b.find(p.name);
    if (!q || !nn::bit_identical(p.value, q->value)) return false;
  }
  return true;
}

nn::Tensor mean_over_uplink(std::span<const nn::Tensor> payloads, LinkKind link,
                            const channel::DigitalLinkConfig& digital, const channel::AirCompConfig& aircomp,
                            nn::Rng& rng, channel::LatencyLedger& ledger, const std::string& phase) {
  if (payloads.empty()) throw InputError("uplink without senders");
  const double k = static_cast<double>(payloads.size());
  nn::Tensor sum;
  if (link == LinkKind::AirComp) {
    channel::Transmission t = channel::aircomp_aggregate(payloads, aircomp, rng);
    ledger.record(phase, channel::LatencyKind::Comm, t.seconds);
    sum = std::move(t.received);
  } else {
    channel::DigitalLinkConfig shared = digital;
    shared.n_sharing_users = payloads.size();
    double seconds = 0.0;
    sum = nn::Tensor(payloads.front().shape());
    for (const auto& p : payloads) {
      if (p.shape() != sum.shape()) throw InputError("uplink payloads must share one shape");
      channel::Transmission t = channel::digital_transmit(p, shared);
      seconds = std::max(seconds, t.seconds);  // orthogonal bands, sent simultaneously
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += t.received[i];
    }
    ledger.record(phase, channel::LatencyKind::Comm, seconds);
  }
  for (double& v : sum.data()) v /= k;
  return sum;
}

}  // namespace deft::protocols
