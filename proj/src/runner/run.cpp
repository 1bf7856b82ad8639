// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/runner/run.hpp"

#include <cstdlib>
#include <sstream>

#include <fmt/format.h>

#include "deft/error.hpp"
#include "deft/tasks/cloze.hpp"

namespace deft::runner {

namespace {

using channel::LatencyKind;
using protocols::LinkKind;
using protocols::PayloadKind;

const char* link_name(LinkKind k) { return k == LinkKind::AirComp ? "aircomp" : "digital"; }

tasks::SyntheticTask make_task(const tasks::World& world, const TaskSpec& t) {
  return tasks::gen_cloze_task(world, t.seed, t.relations, {t.family, t.examples_per_relation});
}

nlohmann::json ledger_json(const channel::LatencyLedger& ledger, const protocols::PayloadAudit& audit) {
  nlohmann::json phases = nlohmann::json::object();
  for (const auto& e : ledger.entries()) {
    auto& slot = phases[e.phase];
    if (slot.is_null()) slot = {{"kind", channel::to_string(e.kind)}, {"seconds", 0.0}};
    slot["seconds"] = slot["seconds"].get<double>() + e.seconds;
  }
  nlohmann::json payloads = nlohmann::json::object();
  for (const PayloadKind k : {PayloadKind::RawData, PayloadKind::Embedding, PayloadKind::Prompt, PayloadKind::Gradient,
                              PayloadKind::Parameter}) {
    if (audit.contains(k)) payloads[protocols::to_string(k)] = audit.total_coeffs(k);
  }
  return {{"phases", phases}, {"server_visible_coeffs", payloads}};
}

std::vector<double> precisions(const std::vector<protocols::RoundTrace>& traces) {
  std::vector<double> out;
  for (const auto& t : traces) out.push_back(t.precision);
  return out;
}

std::vector<double> cumulative_comm(const std::vector<protocols::RoundTrace>& traces) {
  std::vector<double> out;
  for (const auto& t : traces) out.push_back(t.cumulative_comm);
  return out;
}

template <typename Run>
SchemeResult single_replicate(std::string scheme, const Run& run) {
  SchemeResult r;
  r.scheme = std::move(scheme);
  r.comm_seconds = run.ledger.total(LatencyKind::Comm);
  r.compute_seconds = run.ledger.total(LatencyKind::Compute);
  r.epoch_precision = precisions(run.traces);
  r.epoch_cum_comm = cumulative_comm(run.traces);
  r.final_precision = r.epoch_precision.empty() ? 0.0 : r.epoch_precision.back();
  r.traces.push_back(run.traces);
  r.details = ledger_json(run.ledger, run.audit);
  return r;
}

PointResult execute_split(const RunConfig& cfg, const nn::TinyTransformer& base, const tasks::World& world) {
  const auto task = make_task(world, cfg.task);
  PointResult out;
  out.schemes.push_back(single_replicate("deft", protocols::run_single_device_deft(base, task, cfg.split.config)));
  if (cfg.split.centralized_baseline) {
    out.schemes.push_back(
        single_replicate("centralized", protocols::run_centralized_baseline(base, task, cfg.split.config)));
  }
  return out;
}

PointResult execute_federated(const RunConfig& cfg, const nn::TinyTransformer& base, const tasks::World& world) {
  const auto task = make_task(world, cfg.task);
  PointResult out;
  for (const LinkKind link : cfg.federated.links) {
    protocols::FederatedConfig c = cfg.federated.config;
    c.link.kind = link;
    const auto run = protocols::run_federated(base, task, c);
    SchemeResult r = single_replicate(link_name(link), run);
    if (run.emulator) {
      r.details["emulator"] = {{"kept_blocks", run.emulator->kept_blocks},
                               {"parameter_ratio", run.emulator->parameter_ratio}};
    }
    out.schemes.push_back(std::move(r));
  }
  return out;
}

PointResult execute_flyboost(const RunConfig& cfg, const nn::TinyTransformer& base, const tasks::World& world) {
  std::vector<tasks::SyntheticTask> device_tasks;
  for (const auto& t : cfg.flyboost.tasks) device_tasks.push_back(make_task(world, t));
  const auto run = protocols::run_flyboost(base, std::move(device_tasks), cfg.flyboost.config);
  SchemeResult r = single_replicate("flyboost", run);
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& rd : run.rounds) {
    rounds.push_back({{"round", rd.round},
                      {"scores_before", rd.scores_before},
                      {"selected", rd.selected},
                      {"accepted", rd.accepted},
                      {"scores_after", rd.scores_after},
                      {"ensemble_size", rd.ensemble_size}});
  }
  r.details["rounds"] = rounds;
  r.details["converged"] = run.converged;
  r.details["ensemble_size"] = run.ensemble.prompts.size();
  r.details["final_scores"] = run.ensemble.scores;
  PointResult out;
  out.schemes.push_back(std::move(r));
  return out;
}

PointResult execute_d2d(const RunConfig& cfg, const nn::TinyTransformer& base, const tasks::World& world) {
  PointResult out;
  for (const LinkKind link : cfg.d2d.links) {
    SchemeResult r;
    r.scheme = link_name(link);
    r.details["replicates"] = nlohmann::json::array();
    out.schemes.push_back(std::move(r));
  }
  const double n = static_cast<double>(cfg.d2d.replicates);
  for (std::size_t rep = 0; rep < cfg.d2d.replicates; ++rep) {
    protocols::D2DConfig c = cfg.d2d.config;
    c.seed = cfg.seed + rep;
    const auto sources = protocols::train_source_prompts(base, world, c);
    const auto target = tasks::gen_cloze_task(world, c.seed * 100 + 99, c.relations_per_task, {c.target_family, 5});
    for (std::size_t l = 0; l < cfg.d2d.links.size(); ++l) {
      c.link.kind = cfg.d2d.links[l];
      const auto run = protocols::run_d2d(base, sources.prompts, target, c);
      SchemeResult& r = out.schemes[l];
      r.comm_seconds += run.ledger.total(LatencyKind::Comm) / n;
      r.compute_seconds += run.ledger.total(LatencyKind::Compute) / n;
      r.final_precision += run.final_precision / n;
      r.epoch_precision.resize(run.traces.size(), 0.0);
      r.epoch_cum_comm.resize(run.traces.size(), 0.0);
      for (std::size_t e = 0; e < run.traces.size(); ++e) {
        r.epoch_precision[e] += run.traces[e].precision / n;
        r.epoch_cum_comm[e] += run.cumulative_transfer_comm[e] / n;
      }
      r.traces.push_back(run.traces);
      nlohmann::json rep_json = ledger_json(run.ledger, run.audit);
      rep_json["seed"] = c.seed;
      rep_json["final_precision"] = run.final_precision;
      rep_json["attention_weights"] = std::vector<double>(run.attention.weights().size());
      const nn::Tensor w = run.attention.weights();
      for (std::size_t i = 0; i < w.size(); ++i) rep_json["attention_weights"][i] = w[i];
      r.details["replicates"].push_back(std::move(rep_json));
    }
  }
  return out;
}

void append_row(MetricsFrame& frame, std::size_t point, const std::optional<double>& axis_value,
                const PointResult& result) {
  std::vector<std::string> row{fmt::format("{}", point)};
  if (axis_value) row.push_back(format_number(*axis_value));
  for (const auto& s : result.schemes) {
    row.push_back(format_number(s.comm_seconds));
    row.push_back(format_number(s.compute_seconds));
    row.push_back(format_number(s.comm_seconds + s.compute_seconds));
    row.push_back(format_number(s.final_precision));
    row.push_back(join_numbers(s.epoch_precision));
    row.push_back(join_numbers(s.epoch_cum_comm));
  }
  frame.rows.push_back(std::move(row));
}

std::vector<std::string> scheme_names(const RunConfig& cfg) {
  switch (cfg.protocol) {
    case ProtocolKind::SingleDeviceSplit:
      if (cfg.split.centralized_baseline) return {"deft", "centralized"};
      return {"deft"};
    case ProtocolKind::FederatedEmulator:
    case ProtocolKind::FederatedServerAssisted: {
      std::vector<std::string> out;
      for (const auto l : cfg.federated.links) out.push_back(link_name(l));
      return out;
    }
    case ProtocolKind::FlyBoost:
      return {"flyboost"};
    case ProtocolKind::D2DTransfer: {
      std::vector<std::string> out;
      for (const auto l : cfg.d2d.links) out.push_back(link_name(l));
      return out;
    }
  }
  return {};
}

MetricsFrame empty_frame(const RunConfig& cfg, const std::optional<std::string>& axis) {
  MetricsFrame frame;
  frame.columns.push_back("point");
  if (axis) frame.columns.push_back(axis_column(*axis));
  for (const auto& s : scheme_names(cfg)) {
    for (const char* suffix :
         {"_comm_s", "_compute_s", "_total_s", "_final_precision", "_epoch_precision", "_epoch_cum_comm_s"})
      frame.columns.push_back(s + suffix);
  }
  return frame;
}

void write_point(const std::filesystem::path& dir, const RunConfig& cfg, std::size_t point,
                 const std::optional<std::pair<std::string, double>>& axis, const PointResult& result) {
  nlohmann::json summary;
  summary["name"] = cfg.name;
  summary["protocol"] = to_string(cfg.protocol);
  summary["seed"] = cfg.seed;
  summary["point"] = point;
  if (axis) summary["axis"] = {{"name", axis->first}, {"value", axis->second}};
  summary["schemes"] = nlohmann::json::array();
  for (const auto& s : result.schemes) {
    summary["schemes"].push_back({{"scheme", s.scheme},
                                  {"comm_s", s.comm_seconds},
                                  {"compute_s", s.compute_seconds},
                                  {"total_s", s.comm_seconds + s.compute_seconds},
                                  {"final_precision", s.final_precision},
                                  {"epoch_precision", s.epoch_precision},
                                  {"epoch_cum_comm_s", s.epoch_cum_comm},
                                  {"details", s.details}});
    for (std::size_t r = 0; r < s.traces.size(); ++r) {
      std::ostringstream jsonl;
      protocols::write_trace_jsonl(jsonl, s.traces[r]);
      const std::string file =
          s.traces.size() == 1 ? s.scheme + ".trace.jsonl" : fmt::format("{}.r{}.trace.jsonl", s.scheme, r);
      write_file_atomic(dir / file, jsonl.str());
    }
  }
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
}

RunOutput run_points(const RunConfig& cfg, const std::optional<std::string>& axis, const std::vector<double>& values,
                     const std::filesystem::path& root) {
  RunOutput out;
  out.directory = root / cfg.output_dir;
  std::filesystem::create_directories(out.directory);
  out.frame = empty_frame(cfg, axis);
  RunConfig normalised = cfg;
  normalised.sweep.reset();
  if (axis) normalised.sweep = SweepSpec{*axis, values};
  write_file_atomic(out.directory / "config.yaml", to_yaml(normalised));
  if (!axis) {
    const PointResult result = execute(cfg);
    write_point(out.directory, cfg, 0, std::nullopt, result);
    append_row(out.frame, 0, std::nullopt, result);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const RunConfig point = with_axis_value(cfg, *axis, values[i]);
      const PointResult result = execute(point);
      write_point(out.directory / fmt::format("point_{:03}", i), point, i, std::make_pair(*axis, values[i]), result);
      append_row(out.frame, i, values[i], result);
    }
  }
  write_file_atomic(out.directory / "metrics.csv", to_csv(out.frame));
  return out;
}

}  // namespace

PointResult execute(const RunConfig& cfg) {
  const tasks::World world(cfg.world);
  const nn::TinyTransformer& base = tasks::pretrained_base(cfg.model, cfg.model_seed, cfg.world, cfg.pretrain);
  switch (cfg.protocol) {
    case ProtocolKind::SingleDeviceSplit:
      return execute_split(cfg, base, world);
    case ProtocolKind::FederatedEmulator:
    case ProtocolKind::FederatedServerAssisted:
      return execute_federated(cfg, base, world);
    case ProtocolKind::FlyBoost:
      return execute_flyboost(cfg, base, world);
    case ProtocolKind::D2DTransfer:
      return execute_d2d(cfg, base, world);
  }
  throw ConsistencyError("unhandled protocol");
}

std::filesystem::path output_root() {
  if (const char* env = std::getenv("DEFT_OUTPUT_ROOT"); env && *env) return env;
  return "deft-out";
}

RunOutput run(const RunConfig& cfg, const std::filesystem::path& root) {
  if (cfg.sweep) return run_points(cfg, cfg.sweep->axis, cfg.sweep->values, root);
  return run_points(cfg, std::nullopt, {}, root);
}

RunOutput sweep(const RunConfig& cfg, const std::string& axis, const std::vector<double>& values,
                const std::filesystem::path& root) {
  resolve_axis(cfg, axis);
  return run_points(cfg, axis, values, root);
}

}  // namespace deft::runner
