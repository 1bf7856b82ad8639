// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deft::channel {

enum class LatencyKind { Comm, Compute };

const char* to_string(LatencyKind k);

struct LatencyEntry {
  std::string phase;
  LatencyKind kind = LatencyKind::Comm;
  double seconds = 0.0;
};

class LatencyLedger {
 public:
  void record(std::string phase, LatencyKind kind, double seconds);
  void append(const LatencyLedger& other);

  double total(LatencyKind kind) const { return kind == LatencyKind::Comm ? comm_ : compute_; }
  double total() const { return comm_ + compute_; }
  // Sum over the entries of one phase.
  double phase_total(std::string_view phase) const;
  const std::vector<LatencyEntry>& entries() const { return entries_; }

  // phase,kind,seconds
  void write_csv(std::ostream& out) const;

 private:
  std::vector<LatencyEntry> entries_;
  double comm_ = 0.0;
  double compute_ = 0.0;
};

// Concatenation in argument order.
LatencyLedger merge(std::span<const LatencyLedger> ledgers);

}  // namespace deft::channel
