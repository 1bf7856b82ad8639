// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/channel/latency.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "deft/error.hpp"

namespace deft::channel {

const char* to_string(LatencyKind k) { return k == LatencyKind::Comm ? "comm" : "compute"; }

void LatencyLedger::record(std::string phase, LatencyKind kind, double seconds) {
  if (!std::isfinite(seconds) || seconds < 0.0) {
    throw UsageError(fmt::format("latency for '{}' must be finite and non-negative, got {}", phase, seconds));
  }
  (kind == LatencyKind::Comm ? comm_ : compute_) += seconds;
  entries_.push_back({std::move(phase), kind, seconds});
}

double LatencyLedger::phase_total(std::string_view phase) const {
  double s = 0.0;
  for (const auto& e : entries_)
    if (e.phase == phase) s += e.seconds;
  return s;
}

void LatencyLedger::append(const LatencyLedger& other) {
  for (const auto& e : other.entries_) record(e.phase, e.kind, e.seconds);
}

void LatencyLedger::write_csv(std::ostream& out) const {
  out << "phase,kind,seconds\n";
  for (const auto& e : entries_) out << fmt::format("{},{},{}\n", e.phase, to_string(e.kind), e.seconds);
}

LatencyLedger merge(std::span<const LatencyLedger> ledgers) {
  LatencyLedger out;
  for (const auto& l : ledgers) out.append(l);
  return out;
}

}  // namespace deft::channel
