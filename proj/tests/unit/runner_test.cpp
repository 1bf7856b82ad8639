// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "deft/error.hpp"
#include "deft/runner/config.hpp"
#include "deft/runner/metrics.hpp"
#include "deft/runner/run.hpp"
#include "deft/runner/scenarios.hpp"

namespace deft::runner {
namespace {

namespace fs = std::filesystem;

const fs::path kScenarios = fs::path(DEFT_SOURCE_DIR) / "scenarios";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / fmt::format("deft_runner_test_{}", name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A quick single-device run on the default toy world.
constexpr const char* kSmallSplit = R"(config_version: 1
name: small
seed: 3
task: {seed: 5, relations: 12}
protocol:
  kind: single_device_split
  epochs: 2
  iters_per_epoch: 10
  raw_coeffs_per_example: 1000
)";

std::string config_error(const std::string& text) {
  try {
    parse_config(text, "t.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, ScenariosRoundTripThroughYaml) {
  const auto scenarios = list_scenarios(kScenarios);
  ASSERT_GE(scenarios.size(), 5u);
  for (const auto& s : scenarios) {
    const RunConfig cfg = load_config(s.path.string());
    const std::string once = to_yaml(cfg);
    EXPECT_EQ(to_yaml(parse_config(once)), once) << s.name;
  }
}

TEST(Config, EveryPeftKindRoundTrips) {
  const std::string text = R"(config_version: 1
task: {seed: 5}
protocol:
  kind: federated_server_assisted
  peft:
    kind: hybrid
    components:
      - {kind: ptuning, prompt_len: 3}
      - {kind: prefix, lengths: [2, 1]}
      - {kind: low_rank, ranks: [2, 0], construction: kronecker, alpha: 0.5, targets: [attn.wq]}
      - {kind: adapter, bottleneck: 2, blocks: [0, 1]}
      - kind: selective
        mode: binary_mask
        mask:
          final_norm.gamma: {shape: [1, 16], values: [1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0]}
)";
  const RunConfig cfg = parse_config(text);
  const auto& hybrid = cfg.federated.config.peft.as<peft::HybridSpec>();
  ASSERT_EQ(hybrid.components.size(), 5u);
  EXPECT_EQ(hybrid.components[2].as<peft::LowRankSpec>().construction, peft::LowRankConstruction::Kronecker);
  EXPECT_EQ(hybrid.components[4].as<peft::SelectiveSpec>().mask.at("final_norm.gamma")[2], 1.0);
  const std::string once = to_yaml(cfg);
  EXPECT_EQ(to_yaml(parse_config(once)), once);
}

TEST(Config, SeedsAreAlwaysWrittenOut) {
  const std::string yaml = to_yaml(parse_config(kSmallSplit));
  for (const char* key : {"\nseed: 3", "model:", "world:", "pretrain:", "task:"}) {
    EXPECT_NE(yaml.find(key), std::string::npos) << key;
  }
  const RunConfig cfg = parse_config(yaml);
  EXPECT_EQ(cfg.model_seed, 1u);
  EXPECT_EQ(cfg.world.seed, 1u);
  EXPECT_EQ(cfg.pretrain.seed, 1u);
  EXPECT_EQ(cfg.split.config.seed, 3u);
}

TEST(Config, ErrorsCarryFileLineAndKey) {
  EXPECT_EQ(config_error("config_version: 1\nprotocol:\n  kind: single_device_split\n  epohcs: 3\n"),
            "t.yaml:4: protocol.epohcs: unknown key");
  EXPECT_EQ(config_error("config_version: 1\nprotocol:\n  kind: single_device_split\n  epochs: -3\n"),
            "t.yaml:4: protocol.epochs: expected a non-negative integer, got '-3'");
  EXPECT_EQ(config_error("config_version: 1\nprotocol:\n  kind: teleport\n"),
            "t.yaml:3: protocol.kind: unknown value 'teleport' (expected one of: single_device_split, "
            "federated_emulator, federated_server_assisted, flyboost, d2d_transfer)");
  EXPECT_EQ(config_error("config_version: 2\n"), "t.yaml:1: config_version: unsupported version 2 (this build reads 1)");
  EXPECT_EQ(config_error("name: x\n"), "t.yaml:1: <root>: missing required key 'config_version'");
  EXPECT_NE(config_error("config_version: 1\nmodel: {vocab_size: 40}\nprotocol: {kind: flyboost, tasks: [{}]}\n")
                .find("t.yaml:2: model.vocab_size"),
            std::string::npos);
  EXPECT_NE(config_error("config_version: 1\nprotocol:\n  kind: federated_emulator\n  keep_fraction: 0\n")
                .find("t.yaml:3: protocol:"),
            std::string::npos);
  EXPECT_NE(config_error("config_version: 1\nprotocol: [1, 2\n").find("t.yaml:"), std::string::npos);
}

TEST(Config, AxesResolvePerProtocol) {
  const RunConfig split = parse_config(kSmallSplit);
  EXPECT_EQ(resolve_axis(split, "snr_db"), (std::vector<std::string>{"protocol.link.snr_db"}));
  EXPECT_EQ(resolve_axis(split, "epochs"), (std::vector<std::string>{"protocol.epochs"}));
  EXPECT_EQ(resolve_axis(split, "protocol.batch_size"), (std::vector<std::string>{"protocol.batch_size"}));
  EXPECT_THROW(resolve_axis(split, "protocol.warp"), UsageError);
  EXPECT_THROW(resolve_axis(split, "protocol.kind"), UsageError);
  EXPECT_THROW(resolve_axis(split, "model"), UsageError);

  const RunConfig fig6 = load_config((kScenarios / "fig6.yaml").string());
  EXPECT_EQ(resolve_axis(fig6, "snr_db").size(), 2u);
  const RunConfig at30 = with_axis_value(fig6, "snr_db", 30);
  EXPECT_EQ(at30.d2d.config.link.digital.snr_db, 30.0);
  EXPECT_EQ(at30.d2d.config.link.aircomp.snr_db, 30.0);
  EXPECT_FALSE(at30.sweep.has_value());
  EXPECT_EQ(axis_column("protocol.link.snr_db"), "snr_db");
  // Integer fields reject fractional sweep values.
  EXPECT_THROW(with_axis_value(split, "epochs", 2.5), ConfigError);
}

TEST(Metrics, CsvRoundTripsAndNumbersAreExact) {
  MetricsFrame f;
  f.columns = {"point", "a_total_s", "a_epoch_precision"};
  f.rows = {{"0", format_number(0.1 + 0.2), join_numbers({1.0 / 3.0, 2.5})}};
  const MetricsFrame back = parse_csv(to_csv(f));
  EXPECT_EQ(back.columns, f.columns);
  EXPECT_EQ(back.rows, f.rows);
  EXPECT_EQ(split_numbers(back.at(0, "a_epoch_precision")), (std::vector<double>{1.0 / 3.0, 2.5}));
  EXPECT_EQ(std::stod(back.at(0, "a_total_s")), 0.1 + 0.2);
  EXPECT_EQ(f.schemes(), (std::vector<std::string>{"a"}));
  EXPECT_THROW(parse_csv("a,b\n1\n"), UsageError);
  EXPECT_THROW(f.column("missing"), UsageError);
}

MetricsFrame fig5_like() {
  MetricsFrame f;
  f.columns = {"point", "snr_db", "deft_total_s", "centralized_total_s"};
  f.rows = {{"0", "0", "4", "80"}, {"1", "10", "3.9", "23"}};
  return f;
}

MetricsFrame fig6_like() {
  MetricsFrame f;
  f.columns = {"point"};
  for (const char* s : {"digital", "aircomp"}) {
    f.columns.push_back(std::string(s) + "_total_s");
    f.columns.push_back(std::string(s) + "_epoch_precision");
    f.columns.push_back(std::string(s) + "_epoch_cum_comm_s");
  }
  f.rows = {{"0", "1", "0.5;0.9", "0.1;0.2", "1", "0.4;0.9", "0.01;0.02"}};
  return f;
}

TEST(Plots, LatencyVsSnrSchema) {
  const auto files = emit_plot_data(fig5_like(), PlotKind::LatencyVsSnr, false);
  ASSERT_EQ(files.size(), 1u);
  EXPECT_EQ(files[0].name, "latency_vs_snr.csv");
  EXPECT_EQ(files[0].content,
            "snr_db,scheme,total_latency_s\n0,deft,4\n10,deft,3.9\n0,centralized,80\n10,centralized,23\n");
}

TEST(Plots, PrecisionVsEpochSchemaAndSvg) {
  const auto files = emit_plot_data(fig6_like(), PlotKind::PrecisionVsEpoch, true);
  ASSERT_EQ(files.size(), 4u);
  EXPECT_EQ(files[0].name, "precision_vs_epoch.csv");
  EXPECT_EQ(files[0].content.substr(0, files[0].content.find('\n')), "epoch,scheme,precision");
  EXPECT_EQ(files[2].name, "comm_vs_epoch.csv");
  EXPECT_EQ(files[2].content.substr(0, files[2].content.find('\n')), "epoch,scheme,cum_comm_s");
  EXPECT_NE(files[2].content.find("2,aircomp,0.02\n"), std::string::npos);
  for (const std::size_t svg : {1u, 3u}) {
    std::size_t polylines = 0, pos = 0;
    while ((pos = files[svg].content.find("<polyline", pos)) != std::string::npos) ++polylines, ++pos;
    EXPECT_EQ(polylines, 2u);
  }
}

TEST(Plots, MissingColumnsAreUsageErrors) {
  EXPECT_THROW(emit_plot_data(fig6_like(), PlotKind::LatencyVsSnr, false), UsageError);
  EXPECT_THROW(emit_plot_data(fig5_like(), PlotKind::PrecisionVsEpoch, false), UsageError);
  EXPECT_THROW(parse_plot_kind("pie"), UsageError);
}

TEST(Run, WritesFrameTracesAndSummary) {
  const fs::path root = scratch_dir("run");
  const RunOutput out = run(parse_config(kSmallSplit), root);
  ASSERT_EQ(out.frame.rows.size(), 1u);
  EXPECT_EQ(out.frame.schemes(), (std::vector<std::string>{"deft", "centralized"}));
  EXPECT_EQ(read_file(root / "small" / "metrics.csv"), to_csv(out.frame));
  const auto summary = nlohmann::json::parse(read_file(root / "small" / "summary.json"));
  EXPECT_EQ(summary.at("schemes").size(), 2u);
  EXPECT_FALSE(summary["schemes"][0]["details"]["server_visible_coeffs"].contains("raw_data"));
  EXPECT_TRUE(summary["schemes"][1]["details"]["server_visible_coeffs"].contains("raw_data"));
  std::istringstream trace(read_file(root / "small" / "deft.trace.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(trace, line)) EXPECT_EQ(nlohmann::json::parse(line).at("round"), ++n);
  EXPECT_EQ(n, 2u);
  EXPECT_EQ(parse_config(read_file(root / "small" / "config.yaml")).name, "small");
}

TEST(Run, SameConfigAndSeedGiveIdenticalBytes) {
  const RunConfig cfg = parse_config(kSmallSplit);
  const fs::path a = scratch_dir("replay_a"), b = scratch_dir("replay_b");
  run(cfg, a);
  run(cfg, b);
  EXPECT_EQ(read_file(a / "small" / "metrics.csv"), read_file(b / "small" / "metrics.csv"));
  EXPECT_EQ(read_file(a / "small" / "summary.json"), read_file(b / "small" / "summary.json"));
}

TEST(Sweep, SnrSweepGivesOneRowPerValueAndFasterLinks) {
  const RunOutput out = sweep(parse_config(kSmallSplit), "snr_db", {0, 10}, scratch_dir("snr"));
  ASSERT_EQ(out.frame.rows.size(), 2u);
  EXPECT_EQ(out.frame.at(1, "snr_db"), "10");
  for (const char* s : {"deft", "centralized"}) {
    const std::string col = std::string(s) + "_total_s";
    EXPECT_LT(std::stod(out.frame.at(1, col)), std::stod(out.frame.at(0, col))) << s;
  }
  EXPECT_TRUE(fs::exists(out.directory / "point_001" / "summary.json"));
}

TEST(Sweep, EmptyValueListGivesAHeaderOnlyFrame) {
  const RunOutput out = sweep(parse_config(kSmallSplit), "snr_db", {}, scratch_dir("empty"));
  EXPECT_TRUE(out.frame.rows.empty());
  EXPECT_EQ(read_file(out.directory / "metrics.csv").find('\n'), read_file(out.directory / "metrics.csv").size() - 1);
  EXPECT_THROW(sweep(parse_config(kSmallSplit), "warp", {1}, scratch_dir("empty")), UsageError);
}

TEST(Sweep, PrecisionDoesNotDropWithMoreEpochs) {
  RunConfig cfg = parse_config(kSmallSplit);
  cfg.split.centralized_baseline = false;
  const RunOutput out = sweep(cfg, "epochs", {1, 5, 20}, scratch_dir("epochs"));
  ASSERT_EQ(out.frame.rows.size(), 3u);
  // One eval cloze is 1/12 of the precision.
  const double tol = 1.0 / 12.0 + 1e-12;
  for (std::size_t r = 1; r < 3; ++r) {
    EXPECT_GE(std::stod(out.frame.at(r, "deft_final_precision")) + tol,
              std::stod(out.frame.at(r - 1, "deft_final_precision")));
  }
  EXPECT_GT(std::stod(out.frame.at(2, "deft_final_precision")), std::stod(out.frame.at(0, "deft_final_precision")));
}

// ---------------------------------------------------------------- CLI

int cli(const std::string& args, const fs::path& root) {
  const std::string cmd = fmt::format("DEFT_OUTPUT_ROOT='{}' '{}' {} >/dev/null 2>&1", root.string(), DEFT_CLI_PATH, args);
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

TEST(Cli, ExitCodes) {
  const fs::path root = scratch_dir("cli");
  const fs::path cfg = root / "small.yaml";
  std::ofstream(cfg) << kSmallSplit;
  EXPECT_EQ(cli(fmt::format("run '{}'", cfg.string()), root), 0);
  EXPECT_TRUE(fs::exists(root / "small" / "metrics.csv"));
  EXPECT_EQ(cli(fmt::format("emit-plots '{}' --kind precision-vs-epoch", (root / "small" / "metrics.csv").string()), root),
            0);
  EXPECT_TRUE(fs::exists(root / "small" / "precision_vs_epoch.svg"));
  EXPECT_EQ(cli("scenarios list", root), 0);

  const fs::path bad = root / "bad.yaml";
  std::ofstream(bad) << "config_version: 1\nprotocol: {kind: nope}\n";
  EXPECT_EQ(cli(fmt::format("run '{}'", bad.string()), root), 1);
  EXPECT_EQ(cli(fmt::format("sweep '{}' --axis warp --values 1", cfg.string()), root), 1);
  EXPECT_EQ(cli("frobnicate", root), 1);
  EXPECT_EQ(cli(fmt::format("emit-plots '{}' --kind latency-vs-snr", (root / "small" / "metrics.csv").string()), root),
            1);
  EXPECT_EQ(cli(fmt::format("sweep '{}' --axis snr_db --values ''", cfg.string()), root), 0);
  // Output root that cannot be created: a runtime failure.
  EXPECT_EQ(cli(fmt::format("run '{}' --output-root /proc/deft", cfg.string()), root), 2);
}

}  // namespace
}  // namespace deft::runner
