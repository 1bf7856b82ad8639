// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace deft::runner {

// One row per sweep point. Columns:
//   point                       sweep index, from 0
//   <axis>                      swept value (sweeps only)
// and for every scheme s of the protocol:
//   s_comm_s, s_compute_s, s_total_s   ledger totals in seconds
//   s_final_precision
//   s_epoch_precision           per epoch (round), ';'-separated
//   s_epoch_cum_comm_s          cumulative comm seconds per epoch
// Cells never contain commas or quotes.
struct MetricsFrame {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> find(std::string_view column) const;
  // Throws UsageError when the column is missing.
  std::size_t column(std::string_view name) const;
  const std::string& at(std::size_t row, std::string_view column) const;

  // Schemes in column order, from the *_total_s columns.
  std::vector<std::string> schemes() const;
};

std::string to_csv(const MetricsFrame& frame);
MetricsFrame parse_csv(std::string_view text);
MetricsFrame read_csv(const std::filesystem::path& path);

// Shortest text that reads back to the same double.
std::string format_number(double v);
std::string join_numbers(const std::vector<double>& values);
std::vector<double> split_numbers(std::string_view cell);

// Writes to a temporary file next to the target and renames it over.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

enum class PlotKind { LatencyVsSnr, PrecisionVsEpoch };

// "latency-vs-snr" or "precision-vs-epoch"; UsageError otherwise.
PlotKind parse_plot_kind(std::string_view name);

struct PlotFile {
  std::string name;
  std::string content;
};

// Long-format CSVs, columns (x, scheme, y):
//   LatencyVsSnr:     latency_vs_snr.csv      snr_db,scheme,total_latency_s
//   PrecisionVsEpoch: precision_vs_epoch.csv  epoch,scheme,precision
//                     comm_vs_epoch.csv       epoch,scheme,cum_comm_s
// With svg, each CSV gets a static chart with one polyline per series. A
// frame with several rows labels PrecisionVsEpoch series "scheme@point".
// Throws UsageError when the frame lacks the required columns.
std::vector<PlotFile> emit_plot_data(const MetricsFrame& frame, PlotKind kind, bool svg);

}  // namespace deft::runner
