// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// deft: command-line front end of the simulator.
//   deft run <config|scenario> [--output-root DIR]
//   deft sweep <config|scenario> --axis PATH --values V1,V2,...
//   deft scenarios list
//   deft emit-plots <metrics.csv> --kind latency-vs-snr|precision-vs-epoch [--out DIR] [--no-svg]
// Exit codes: 0 ok, 1 configuration or usage error, 2 runtime error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "deft/error.hpp"
#include "deft/runner/config.hpp"
#include "deft/runner/metrics.hpp"
#include "deft/runner/run.hpp"
#include "deft/runner/scenarios.hpp"

namespace {

namespace fs = std::filesystem;
using namespace deft::runner;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = text.find(',', start);
    const std::string part = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw deft::UsageError(fmt::format("--values: '{}' is not a number", part));
    }
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

void report(const RunOutput& out) {
  const auto schemes = out.frame.schemes();
  for (std::size_t r = 0; r < out.frame.rows.size(); ++r) {
    std::string line = fmt::format("point {}", out.frame.rows[r][0]);
    // Sweeps put the axis value in the second column.
    if (out.frame.columns.size() > 1 && !out.frame.columns[1].ends_with("_comm_s")) {
      line += fmt::format(" {}={}", out.frame.columns[1], out.frame.rows[r][1]);
    }
    for (const auto& s : schemes) {
      line += fmt::format("  {}: total {} s, precision {}", s, out.frame.at(r, s + "_total_s"),
                          out.frame.at(r, s + "_final_precision"));
    }
    std::cout << line << "\n";
  }
  std::cout << "metrics: " << (out.directory / "metrics.csv").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Device-edge cooperative fine-tuning simulator"};
  app.require_subcommand(1);

  std::string config_arg, axis, values_text, frame_path, kind_text, out_dir, output_root_arg;
  bool no_svg = false;

  auto* run_cmd = app.add_subcommand("run", "Run a configuration or bundled scenario");
  run_cmd->add_option("config", config_arg, "YAML run configuration or scenario name")->required();
  run_cmd->add_option("--output-root", output_root_arg, "Output root (default: $DEFT_OUTPUT_ROOT or deft-out)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run one configuration per value of an axis");
  sweep_cmd->add_option("config", config_arg, "YAML run configuration or scenario name")->required();
  sweep_cmd->add_option("--axis", axis, "snr_db, epochs or a dotted key path such as protocol.batch_size")
      ->required();
  sweep_cmd->add_option("--values", values_text, "Comma-separated values (may be empty)")->required();
  sweep_cmd->add_option("--output-root", output_root_arg, "Output root (default: $DEFT_OUTPUT_ROOT or deft-out)");

  auto* scenarios_cmd = app.add_subcommand("scenarios", "Bundled scenarios");
  scenarios_cmd->require_subcommand(1);
  auto* list_cmd = scenarios_cmd->add_subcommand("list", "List bundled scenarios");

  auto* plots_cmd = app.add_subcommand("emit-plots", "Write plot-ready CSV (and SVG) from a metrics frame");
  plots_cmd->add_option("frame", frame_path, "metrics.csv written by run or sweep")->required();
  plots_cmd->add_option("--kind", kind_text, "latency-vs-snr or precision-vs-epoch")->required();
  plots_cmd->add_option("--out", out_dir, "Output directory (default: next to the frame)");
  plots_cmd->add_flag("--no-svg", no_svg, "Skip the SVG charts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    const fs::path root = output_root_arg.empty() ? output_root() : fs::path(output_root_arg);
    if (*run_cmd) {
      const RunConfig cfg = load_config(resolve_scenario(config_arg, scenario_dir()).string());
      report(run(cfg, root));
    } else if (*sweep_cmd) {
      const RunConfig cfg = load_config(resolve_scenario(config_arg, scenario_dir()).string());
      report(sweep(cfg, axis, parse_values(values_text), root));
    } else if (*list_cmd) {
      for (const auto& s : list_scenarios(scenario_dir())) std::cout << fmt::format("{:<28} {}\n", s.name, s.description);
    } else if (*plots_cmd) {
      const MetricsFrame frame = read_csv(frame_path);
      const fs::path dir = out_dir.empty() ? fs::path(frame_path).parent_path() : fs::path(out_dir);
      for (const auto& f : emit_plot_data(frame, parse_plot_kind(kind_text), !no_svg)) {
        write_file_atomic(dir / f.name, f.content);
        std::cout << (dir / f.name).string() << "\n";
      }
    }
  } catch (const deft::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const deft::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}
