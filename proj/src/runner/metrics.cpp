// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/runner/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <unistd.h>

#include "deft/error.hpp"

namespace deft::runner {

namespace {

constexpr std::string_view kTotalSuffix = "_total_s";

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = text.find(sep, start);
    out.emplace_back(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

double parse_number(std::string_view cell) {
  const std::string s(cell);
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  double v = 0.0;
  in >> v;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (in.fail() || !in.eof()) throw UsageError(fmt::format("'{}' is not a number", s));
  return v;
}

struct Series {
  std::string name;
  std::vector<double> x, y;
};

std::string long_csv(const std::string& x, const std::string& y, const std::vector<Series>& series) {
  std::string out = fmt::format("{},scheme,{}\n", x, y);
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i)
      out += fmt::format("{},{},{}\n", format_number(s.x[i]), s.name, format_number(s.y[i]));
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string svg_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
  constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!(x1 > x0)) x0 -= 0.5, x1 += 0.5;
  if (!(y1 > y0)) y0 -= 0.5, y1 += 0.5;
  y0 = std::min(y0, 0.0);
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return kTop + (1.0 - (v - y0) / (y1 - y0)) * ph; };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n",
      kW, kH);
  out += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kW, kH);
  out += fmt::format("<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", kW / 2, title);
  out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", kLeft,
                     kTop, pw, ph);
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.3g}</text>\n", px(xv),
                       kTop + ph + 16, xv);
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 6,
                       py(yv) + 4, yv);
  }
  out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", kLeft + pw / 2,
                     kH - 12, x_label);
  out += fmt::format("<text x=\"16\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1f})\">{}</text>\n",
                     kTop + ph / 2, kTop + ph / 2, y_label);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* colour = kPalette[i % std::size(kPalette)];
    std::string points;
    for (std::size_t j = 0; j < s.x.size(); ++j)
      points += fmt::format("{}{:.2f},{:.2f}", j ? " " : "", px(s.x[j]), py(s.y[j]));
    out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", colour, points);
    const double ly = kTop + 14 + 18.0 * static_cast<double>(i);
    out += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                       kLeft + pw + 10, ly, kLeft + pw + 30, ly, colour);
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", kLeft + pw + 36, ly + 4, s.name);
  }
  out += "</svg>\n";
  return out;
}

void add(std::vector<PlotFile>& files, const std::string& stem, const std::string& title, const std::string& x,
         const std::string& y, const std::vector<Series>& series, bool svg) {
  files.push_back({stem + ".csv", long_csv(x, y, series)});
  if (svg) files.push_back({stem + ".svg", svg_chart(title, x, y, series)});
}

}  // namespace

std::optional<std::size_t> MetricsFrame::find(std::string_view name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) return std::nullopt;
  return static_cast<std::size_t>(it - columns.begin());
}

std::size_t MetricsFrame::column(std::string_view name) const {
  if (const auto c = find(name)) return *c;
  throw UsageError(fmt::format("metrics frame has no '{}' column", name));
}

const std::string& MetricsFrame::at(std::size_t row, std::string_view name) const { return rows.at(row).at(column(name)); }

std::vector<std::string> MetricsFrame::schemes() const {
  std::vector<std::string> out;
  for (const auto& c : columns) {
    if (c.size() > kTotalSuffix.size() && c.ends_with(kTotalSuffix))
      out.push_back(c.substr(0, c.size() - kTotalSuffix.size()));
  }
  return out;
}

std::string to_csv(const MetricsFrame& frame) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(frame.columns);
  for (const auto& r : frame.rows) line(r);
  return out;
}

MetricsFrame parse_csv(std::string_view text) {
  MetricsFrame frame;
  auto lines = split(text, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw UsageError("empty metrics frame");
  frame.columns = split(lines[0], ',');
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cells = split(lines[i], ',');
    if (cells.size() != frame.columns.size()) {
      throw UsageError(fmt::format("metrics row {} has {} cells, header has {}", i, cells.size(),
                                   frame.columns.size()));
    }
    frame.rows.push_back(std::move(cells));
  }
  return frame;
}

MetricsFrame read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(fmt::format("{}: cannot open metrics frame", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  return parse_csv(text.str());
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

std::string join_numbers(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ';';
    out += format_number(values[i]);
  }
  return out;
}

std::vector<double> split_numbers(std::string_view cell) {
  std::vector<double> out;
  if (cell.empty()) return out;
  for (const auto& part : split(cell, ';')) out.push_back(parse_number(part));
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += fmt::format(".tmp{}", static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error(fmt::format("{}: write failed", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

PlotKind parse_plot_kind(std::string_view name) {
  if (name == "latency-vs-snr") return PlotKind::LatencyVsSnr;
  if (name == "precision-vs-epoch") return PlotKind::PrecisionVsEpoch;
  throw UsageError(fmt::format("unknown plot kind '{}' (latency-vs-snr, precision-vs-epoch)", name));
}

std::vector<PlotFile> emit_plot_data(const MetricsFrame& frame, PlotKind kind, bool svg) {
  const auto schemes = frame.schemes();
  if (schemes.empty()) throw UsageError("metrics frame has no <scheme>_total_s columns");
  std::vector<PlotFile> files;
  if (kind == PlotKind::LatencyVsSnr) {
    const std::size_t x = frame.column("snr_db");
    std::vector<Series> series;
    for (const auto& s : schemes) {
      const std::size_t y = frame.column(s + "_total_s");
      Series line{s, {}, {}};
      for (const auto& row : frame.rows) {
        line.x.push_back(parse_number(row[x]));
        line.y.push_back(parse_number(row[y]));
      }
      series.push_back(std::move(line));
    }
    add(files, "latency_vs_snr", "Latency versus SNR", "snr_db", "total_latency_s", series, svg);
    return files;
  }
  std::vector<Series> precision, comm;
  for (std::size_t r = 0; r < frame.rows.size(); ++r) {
    for (const auto& s : schemes) {
      const std::string name = frame.rows.size() > 1 ? fmt::format("{}@{}", s, frame.rows[r][frame.column("point")]) : s;
      const auto p = split_numbers(frame.rows[r][frame.column(s + "_epoch_precision")]);
      const auto c = split_numbers(frame.rows[r][frame.column(s + "_epoch_cum_comm_s")]);
      Series sp{name, {}, p}, sc{name, {}, c};
      for (std::size_t e = 0; e < p.size(); ++e) sp.x.push_back(static_cast<double>(e + 1));
      for (std::size_t e = 0; e < c.size(); ++e) sc.x.push_back(static_cast<double>(e + 1));
      precision.push_back(std::move(sp));
      comm.push_back(std::move(sc));
    }
  }
  add(files, "precision_vs_epoch", "Precision versus epoch", "epoch", "precision", precision, svg);
  add(files, "comm_vs_epoch", "Cumulative communication latency versus epoch", "epoch", "cum_comm_s", comm, svg);
  return files;
}

}  // namespace deft::runner
