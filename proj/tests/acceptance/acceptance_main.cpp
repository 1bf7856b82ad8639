// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Scenario criteria (5, 6, 8, 10) share one run of each
// bundled scenario, written under a temporary output root.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "deft/channel/aircomp.hpp"
#include "deft/channel/digital.hpp"
#include "deft/channel/latency.hpp"
#include "deft/nn/ops.hpp"
#include "deft/nn/optim.hpp"
#include "deft/peft/importance.hpp"
#include "deft/peft/peft_model.hpp"
#include "deft/peft/trainer.hpp"
#include "deft/protocols/federated.hpp"
#include "deft/protocols/split.hpp"
#include "deft/runner/config.hpp"
#include "deft/runner/metrics.hpp"
#include "deft/runner/run.hpp"
#include "deft/runner/scenarios.hpp"
#include "deft/tasks/batching.hpp"
#include "deft/tasks/pretrain.hpp"
#include "../unit/test_support.hpp"

namespace {

namespace fs = std::filesystem;
using namespace deft;
using nn::Tensor;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

double max_rel_diff(const Tensor& a, const Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / std::max(den, 1e-300);
}

double max_rel_diff(const nn::GradMap& a, const nn::GradMap& b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (const auto& [name, g] : b) {
    const auto it = a.find(name);
    worst = std::max(worst, it == a.end() ? INFINITY : max_rel_diff(it->second, g));
  }
  return worst;
}

double frobenius_rel_error(const Tensor& a, const Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

// ---------------------------------------------------------------- 1, 2

const nn::TransformerConfig kToy{2, 8, 2, 16, 32, 16};

const tasks::ClozeBatch& toy_batch() {
  static const tasks::ClozeBatch b = [] {
    std::vector<tasks::ClozeExample> xs{{{5, 0, 9, 12}, 1, 20, 0}, {{7, 0, 3, 3}, 1, 11, 1}};
    return tasks::make_batch(xs);
  }();
  return b;
}

Verdict gradient_suite() {
  using namespace peft;
  const std::vector<std::pair<std::string, PeftSpec>> variants{
      {"ptuning", PTuningSpec{3}},
      {"prefix", PrefixSpec{{2, 1}}},
      {"low_rank", LowRankSpec{{2, 1}}},
      {"low_rank_fastfood", LowRankSpec{{2, 3}, LowRankConstruction::Fastfood}},
      {"low_rank_kronecker", LowRankSpec{{2, 4}, LowRankConstruction::Kronecker}},
      {"adapter", AdapterSpec{3, {0, 1}}},
      {"selective_bias", SelectiveSpec{SelectiveMode::BiasOnly, {}, 0, {}}},
      {"selective_layer", SelectiveSpec{SelectiveMode::LayerSubset, {1}, 0, {}}},
      {"selective_topk", SelectiveSpec{SelectiveMode::TopK, {}, 40, {}}},
      {"hybrid", compose({PTuningSpec{2}, SelectiveSpec{SelectiveMode::BiasOnly, {}, 0, {}}})},
  };
  const auto t0 = Clock::now();
  nn::TinyTransformer base(kToy, 17);
  const nn::GradMap warm = warmup_gradients(base, [](nn::Tape& t, const nn::TinyTransformer& m) {
    const auto& b = toy_batch();
    return nn::cross_entropy(m.select_logits(t, b.tokens, b.rows), b.targets);
  });
  Verdict v;
  std::size_t total = 0;
  for (const auto& [name, spec] : variants) {
    PeftModel m(base, spec, 5, {InitMode::Random, warm});
    std::size_t checked = 0;
    const auto bad = deft::testing::check_gradients(
        {&m.params()},
        [&](nn::Tape& t) {
          const auto& b = toy_batch();
          return nn::cross_entropy(m.base().select_logits(t, b.tokens, b.rows, &m), b.targets);
        },
        1e-5, 1e-4, &checked);
    total += checked;
    v.require(checked > 0, name + ": no coordinates checked");
    v.require(bad.empty(), fmt::format("{}: {} coordinates off", name, bad.size()));
  }
  const double elapsed = seconds_since(t0);
  v.require(elapsed < 120.0, fmt::format("runtime {:.1f} s", elapsed));
  if (v.pass) v.detail = fmt::format("{} variants, {} coordinates, rel err < 1e-4, {:.1f} s", variants.size(), total, elapsed);
  return v;
}

Verdict zero_delta() {
  using namespace peft;
  nn::TinyTransformer base(kToy, 23);
  const std::vector<int> tokens{4, 0, 8, 30};
  nn::Tape t0;
  const Tensor ref = base.forward(t0, tokens).value();
  const std::vector<std::pair<std::string, PeftSpec>> zero{
      {"ptuning", PTuningSpec{0}},
      {"prefix", PrefixSpec{{0, 0}}},
      {"low_rank", LowRankSpec{{2, 2}}},
      {"low_rank_fastfood", LowRankSpec{{3, 3}, LowRankConstruction::Fastfood}},
      {"low_rank_kronecker", LowRankSpec{{2, 4}, LowRankConstruction::Kronecker}},
      {"adapter", AdapterSpec{4, {0, 1}}},
      {"selective", SelectiveSpec{SelectiveMode::BiasOnly, {}, 0, {}}},
      {"hybrid", compose({LowRankSpec{{1, 1}}, AdapterSpec{2, {1}}})},
  };
  Verdict v;
  for (const auto& [name, spec] : zero) {
    PeftModel m(base, spec, 9);
    nn::Tape t;
    v.require(nn::bit_identical(m.forward(t, tokens).value(), ref), name + " differs");
  }
  if (v.pass) v.detail = fmt::format("{} variants bit-identical", zero.size());
  return v;
}

// ---------------------------------------------------------------- 3, 4

Tensor matvec(const Tensor& w, const Tensor& x) {
  Tensor y({w.rows()});
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) y[i] += w.at(i, j) * x[j];
  return y;
}

Verdict aircomp() {
  using namespace channel;
  const auto t0 = Clock::now();
  Verdict v;
  nn::Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const MimoChannel h = MimoChannel::draw(4, 6, rng);
    const std::size_t m = 1 + rng.index(9), n = 1 + rng.index(7);
    const Tensor w = rng.normal_tensor({m, n}, 1.0), x = rng.normal_tensor({n}, 1.0);
    // G H P = W needs W to fit the receive array; aircomp_matvec tiles larger W.
    const Tensor target = rng.normal_tensor({1 + rng.index(4), n}, 1.0);
    const PrecoderEqualizer d = design_precoder_equalizer(h, target);
    worst = std::max(worst, frobenius_rel_error(nn::matmul(d.equalizer, nn::matmul(h.matrix(), d.precoder)), target));
    worst = std::max(worst, frobenius_rel_error(aircomp_matvec(w, x, h, {0.0, 6, 4, 2e7, true}, rng).received,
                                                matvec(w, x)));
  }
  v.require(worst < 1e-10, fmt::format("noiseless rel err {:.3g}", worst));

  const MimoChannel h = MimoChannel::draw(4, 4, rng);
  const Tensor w = rng.normal_tensor({4, 8}, 1.0), x = rng.normal_tensor({8}, 1.0);
  const Tensor truth = matvec(w, x);
  std::vector<double> lx, ly;
  for (double snr : {0.0, 10.0, 20.0, 30.0}) {
    double mse = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const Tensor y = aircomp_matvec(w, x, h, {snr, 4, 4, 2e7}, rng).received;
      for (std::size_t k = 0; k < 4; ++k) mse += (y[k] - truth[k]) * (y[k] - truth[k]);
    }
    lx.push_back(snr / 10.0);
    ly.push_back(std::log10(mse / 10000));
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < 4; ++i) mx += lx[i] / 4, my += ly[i] / 4;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < 4; ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
  const double slope = sxy / sxx, elapsed = seconds_since(t0);
  v.require(std::abs(slope + 1.0) <= 0.1, fmt::format("slope {:.4f}", slope));
  v.require(elapsed < 120.0, fmt::format("runtime {:.1f} s", elapsed));
  if (v.pass) v.detail = fmt::format("max noiseless rel err {:.2g}, MSE slope {:.4f}, {:.1f} s", worst, slope, elapsed);
  return v;
}

Verdict latency_laws() {
  using namespace channel;
  Verdict v;
  for (double snr_db : {0.0, 10.0, 20.0, 30.0}) {
    for (std::size_t k : {1u, 4u, 10u}) {
      for (std::size_t n : {1u, 1000u, 123457u}) {
        const DigitalLinkConfig link{snr_db, 20e6, 8, k};
        const double snr = std::pow(10.0, snr_db / 10.0);
        const double expected = static_cast<double>(n) * 8.0 / (20e6 / static_cast<double>(k) * std::log2(1.0 + snr));
        v.require(digital_latency(n, link) == expected, fmt::format("digital n={} K={} snr={}", n, k, snr_db));
      }
    }
  }
  nn::Rng rng(1);
  const Tensor payload = rng.normal_tensor({37}, 1.0);
  const double ref = aircomp_aggregate(std::vector<Tensor>{payload}, {0.0, 4, 4, 2e7}, rng).seconds;
  for (double snr_db : {0.0, 10.0, 30.0}) {
    for (std::size_t k : {1u, 2u, 10u, 50u}) {
      const std::vector<Tensor> many(k, payload);
      v.require(aircomp_aggregate(many, {snr_db, 4, 4, 2e7}, rng).seconds == ref,
                fmt::format("aircomp K={} snr={}", k, snr_db));
    }
  }
  if (v.pass) v.detail = fmt::format("digital exact at B=20 MHz, 8 bits; AirComp round {:.4g} s for all K, SNR", ref);
  return v;
}

// ---------------------------------------------------------------- 7

const nn::TransformerConfig kSmall{2, 16, 2, 64, 32, 16};

Verdict federated_identities() {
  using namespace protocols;
  const nn::TinyTransformer& base = tasks::pretrained_base(kSmall, 1, tasks::WorldConfig{}, {});
  const tasks::World world{tasks::WorldConfig{}};
  const tasks::SyntheticTask task = tasks::gen_cloze_task(world, 5, 12);
  Verdict v;

  auto devices_on = [&](const nn::TinyTransformer& model, const peft::PeftSpec& spec, std::size_t k) {
    std::vector<FederatedDevice> out;
    for (std::size_t i = 0; i < k; ++i) {
      FederatedDevice d;
      d.profile.id = i;
      d.model = std::make_unique<peft::PeftModel>(model, spec, 11);
      d.batches = std::make_unique<BatchStream>(task.train, 8, 7);
      out.push_back(std::move(d));
    }
    return out;
  };
  struct Fixture {
    FederatedLink link;
    ComputeModel compute;
    nn::Rng rng{3};
    channel::LatencyLedger ledger;
    PayloadAudit audit;
    RoundContext ctx() { return {link, compute, 0.01, rng, ledger, audit}; }
  };

  double shard_err = 0.0;
  for (std::size_t k : {2u, 3u, 8u}) {
    const Emulator e = compress_emulator(base, 0.5);
    auto devices = devices_on(e.model, peft::PTuningSpec{4}, k);
    BatchStream stream(task.train, 8, 7);
    const peft::StepResult single = peft::loss_and_grads(*devices[0].model, stream.next());
    Fixture f;
    const FederatedRound r = federated_emulator_round(devices, f.ctx());
    shard_err = std::max(shard_err, max_rel_diff(r.aggregate, flatten_grads(devices[0].model->params(), single.grads)));
  }
  v.require(shard_err < 1e-12, fmt::format("identical shards rel err {:.3g}", shard_err));

  double split_err = 0.0;
  const std::span<const tasks::ClozeExample> batch = std::span(task.train).first(8);
  for (const peft::PeftSpec& spec : {peft::PeftSpec{peft::PTuningSpec{4}}, peft::PeftSpec{peft::AdapterSpec{4, {0}}}}) {
    peft::PeftModel m(base, spec, 3, {peft::InitMode::Random, {}});
    const SplitStep s = split_step(m, batch, ideal_transport, ideal_transport);
    split_err = std::max(split_err, max_rel_diff(s.grads, peft::loss_and_grads(m, batch).grads));

    auto devices = devices_on(base, spec, 1);
    peft::PeftModel reference(base, spec, 11);
    BatchStream stream(task.train, 8, 7);
    const peft::StepResult mono = peft::loss_and_grads(reference, stream.next());
    nn::sgd_step(reference.params(), mono.grads, 0.01);
    Fixture f;
    federated_server_assisted_round(devices, f.ctx());
    split_err = std::max(split_err,
                         max_rel_diff(flatten_values(devices[0].model->params()), flatten_values(reference.params())));
  }
  v.require(split_err < 1e-10, fmt::format("split backward rel err {:.3g}", split_err));
  if (v.pass) v.detail = fmt::format("shard aggregate rel err {:.2g}, split backward rel err {:.2g}", shard_err, split_err);
  return v;
}

// ---------------------------------------------------------------- 9

Verdict allocation() {
  using namespace peft;
  Verdict v;
  nn::Rng rng(99);
  int conserved = 0, invariant = 0, monotone = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(8);
    ImportanceReport r;
    std::vector<std::size_t> caps;
    std::size_t cap_sum = 0;
    for (std::size_t b = 0; b < n; ++b) {
      r.scores.push_back(rng.index(4) == 0 ? 0.0 : rng.uniform(0.0, 10.0));
      caps.push_back(1 + rng.index(20));
      cap_sum += caps.back();
    }
    // Half the instances uncapped.
    if (trial % 2) caps.assign(n, kNoCap), cap_sum = 200;
    const std::size_t budget = rng.index(cap_sum + 1);
    const RankAllocation a = allocate_budget(r, budget, caps);
    std::size_t total = 0;
    bool within = true;
    for (std::size_t b = 0; b < n; ++b) total += a.sizes[b], within = within && a.sizes[b] <= caps[b];
    conserved += total == budget && within;
    ImportanceReport scaled = r;
    const double c = rng.uniform(0.01, 1000.0);
    for (double& s : scaled.scores) s *= c;
    invariant += allocate_budget(scaled, budget, caps).sizes == a.sizes;
    ImportanceReport raised = r;
    const std::size_t k = rng.index(n);
    raised.scores[k] += rng.uniform(0.0, 5.0);
    monotone += allocate_budget(raised, budget, caps).sizes[k] >= a.sizes[k];
  }
  v.require(conserved == 1000, fmt::format("conserved {}/1000", conserved));
  v.require(invariant == 1000, fmt::format("scale-invariant {}/1000", invariant));
  v.require(monotone == 1000, fmt::format("monotone {}/1000", monotone));
  if (v.pass) v.detail = "1000 instances: conserved, scale-invariant, monotone";
  return v;
}

// ---------------------------------------------------------------- scenarios

struct ScenarioRun {
  runner::MetricsFrame frame;
  fs::path directory;
  double seconds = 0.0;
  std::string error;
};

std::map<std::string, ScenarioRun> run_scenarios(const fs::path& root) {
  std::map<std::string, ScenarioRun> out;
  for (const auto& s : runner::list_scenarios(runner::scenario_dir())) {
    ScenarioRun r;
    const auto t0 = Clock::now();
    try {
      const auto result = runner::run(runner::load_config(s.path.string()), root);
      r.frame = result.frame;
      r.directory = result.directory;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.seconds = seconds_since(t0);
    out[s.name] = std::move(r);
  }
  return out;
}

const ScenarioRun* find_run(const std::map<std::string, ScenarioRun>& runs, const std::string& name, Verdict& v) {
  const auto it = runs.find(name);
  if (it == runs.end()) {
    v.require(false, "scenario " + name + " missing");
    return nullptr;
  }
  if (!it->second.error.empty()) {
    v.require(false, name + ": " + it->second.error);
    return nullptr;
  }
  return &it->second;
}

double num(const runner::MetricsFrame& f, std::size_t row, const std::string& col) { return std::stod(f.at(row, col)); }

Verdict fig5(const std::map<std::string, ScenarioRun>& runs) {
  Verdict v;
  const ScenarioRun* r = find_run(runs, "fig5", v);
  if (!r) return v;
  const auto& f = r->frame;
  std::vector<double> snr, gap;
  double at10 = NAN, central10 = NAN;
  for (std::size_t i = 0; i < f.rows.size(); ++i) {
    snr.push_back(num(f, i, "snr_db"));
    const double deft_total = num(f, i, "deft_total_s"), central = num(f, i, "centralized_total_s");
    gap.push_back(central - deft_total);
    if (snr.back() == 10.0) at10 = deft_total, central10 = central;
  }
  v.require(f.rows.size() >= 3, "fewer than 3 SNR points");
  if (!v.pass) return v;
  v.require(at10 <= central10 / 5.0, fmt::format("(a) at 10 dB deft {:.4g} s vs centralized {:.4g} s", at10, central10));
  const std::size_t top = f.rows.size() - 1;
  const double top_total = num(f, top, "deft_total_s"), top_compute = num(f, top, "deft_compute_s");
  const double limit = std::abs(top_total - top_compute) / top_compute;
  v.require(limit <= 0.01, fmt::format("(b) top-SNR total is {:.3g}% above compute", 100 * limit));
  bool narrowing = true;
  for (std::size_t i = 1; i < gap.size(); ++i) narrowing = narrowing && snr[i] > snr[i - 1] && gap[i] < gap[i - 1];
  v.require(narrowing, "(c) gap not strictly narrowing");
  v.require(r->seconds < 300.0, fmt::format("runtime {:.1f} s", r->seconds));
  if (v.pass)
    v.detail = fmt::format("(a) x{:.2f} at 10 dB, (b) +{:.3f}% at {} dB, (c) gap {:.4g} -> {:.4g} s, {:.1f} s",
                           central10 / at10, 100 * limit, snr[top], gap.front(), gap.back(), r->seconds);
  return v;
}

Verdict fig6(const std::map<std::string, ScenarioRun>& runs) {
  Verdict v;
  const ScenarioRun* r = find_run(runs, "fig6", v);
  if (!r) return v;
  const runner::RunConfig cfg = runner::load_config(runner::resolve_scenario("fig6", runner::scenario_dir()).string());
  v.require(cfg.d2d.config.n_sources >= 10, "fewer than 10 sources");
  v.require(cfg.d2d.config.link.aircomp.snr_db == 20.0 && cfg.d2d.config.link.digital.snr_db == 20.0, "SNR is not 20 dB");
  const auto& f = r->frame;
  const double digital = num(f, 0, "digital_final_precision"), air = num(f, 0, "aircomp_final_precision");
  v.require(digital >= 0.9 && air >= 0.9, fmt::format("(a) finals digital {:.4f}, aircomp {:.4f}", digital, air));
  const auto pd = runner::split_numbers(f.at(0, "digital_epoch_precision"));
  const auto pa = runner::split_numbers(f.at(0, "aircomp_epoch_precision"));
  // Early = the first half of the epoch budget.
  double early = 0.0;
  const std::size_t half = pd.size() / 2;
  for (std::size_t e = 0; e < half; ++e) early += (pd[e] - pa[e]) / static_cast<double>(half);
  v.require(half > 0 && early > 0.0, fmt::format("(b) early mean gap {:.4f}", early));
  v.require(std::abs(digital - air) <= 0.02, fmt::format("(b) final gap {:.4f}", digital - air));
  const double cd = runner::split_numbers(f.at(0, "digital_epoch_cum_comm_s")).back();
  const double ca = runner::split_numbers(f.at(0, "aircomp_epoch_cum_comm_s")).back();
  v.require(ca <= cd / 10.0, fmt::format("(c) cumulative comm digital {:.4g} s, aircomp {:.4g} s", cd, ca));
  v.require(r->seconds < 600.0, fmt::format("runtime {:.1f} s", r->seconds));
  if (v.pass)
    v.detail = fmt::format("(a) {:.4f}/{:.4f}, (b) early gap {:.4f}, final gap {:.4f}, (c) comm x{:.1f}, {:.1f} s",
                           digital, air, early, digital - air, cd / ca, r->seconds);
  return v;
}

Verdict flyboost(const std::map<std::string, ScenarioRun>& runs) {
  Verdict v;
  const ScenarioRun* r = find_run(runs, "flyboost", v);
  if (!r) return v;
  const runner::RunConfig cfg =
      runner::load_config(runner::resolve_scenario("flyboost", runner::scenario_dir()).string());
  const double tau = cfg.flyboost.config.threshold;
  v.require(tau == 0.9, fmt::format("threshold {}", tau));
  v.require(cfg.flyboost.tasks.size() == 2 && cfg.flyboost.tasks[0].family != cfg.flyboost.tasks[1].family,
            "not two devices on distinct task families");
  std::ifstream in(r->directory / "summary.json");
  const nlohmann::json summary = nlohmann::json::parse(in);
  const nlohmann::json& d = summary["schemes"][0]["details"];
  std::vector<double> last(2, 0.0);
  bool monotone = true, selection = true;
  for (const auto& round : d["rounds"]) {
    const auto before = round["scores_before"].get<std::vector<double>>();
    const auto after = round["scores_after"].get<std::vector<double>>();
    const auto selected = round["selected"].get<std::vector<std::size_t>>();
    for (std::size_t k = 0; k < 2; ++k) {
      monotone = monotone && after[k] >= before[k] && after[k] >= last[k];
      last[k] = after[k];
    }
    for (std::size_t id : selected) selection = selection && before[id] < tau;
  }
  v.require(monotone, "scores decreased across rounds");
  v.require(selection, "a device at or above the threshold was selected");
  const auto finals = d["final_scores"].get<std::vector<double>>();
  v.require(d["converged"].get<bool>() && finals[0] >= tau && finals[1] >= tau,
            fmt::format("final scores {:.3f}, {:.3f}", finals[0], finals[1]));
  if (v.pass)
    v.detail = fmt::format("{} rounds, final scores {:.3f}/{:.3f}, ensemble of {}", d["rounds"].size(), finals[0],
                           finals[1], d["ensemble_size"].get<std::size_t>());
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict replay(const std::map<std::string, ScenarioRun>& runs) {
  Verdict v;
  const fs::path expected_dir = runner::scenario_dir() / "expected";
  for (const auto& [name, r] : runs) {
    if (!r.error.empty()) {
      v.require(false, name + ": " + r.error);
      continue;
    }
    const fs::path expected = expected_dir / (name + ".csv");
    if (!fs::exists(expected)) {
      v.require(false, name + ": no expected CSV");
      continue;
    }
    v.require(slurp(r.directory / "metrics.csv") == slurp(expected), name + " differs");
  }
  v.require(!runs.empty(), "no scenarios");
  if (v.pass) v.detail = fmt::format("{} scenarios byte-identical", runs.size());
  return v;
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / fmt::format("deft-acceptance-{}", static_cast<long>(::getpid()));
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    failed += !v.pass;
    std::printf("%s criterion %d %s: %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
    std::fflush(stdout);
  };
  report(1, "gradient suite", gradient_suite);
  report(2, "zero-delta invariance", zero_delta);
  report(3, "AirComp exactness and scaling", aircomp);
  report(4, "latency laws", latency_laws);

  std::map<std::string, ScenarioRun> runs;
  try {
    runs = run_scenarios(root);
  } catch (const std::exception& e) {
    std::printf("scenario discovery failed: %s\n", e.what());
  }
  report(5, "split latency versus SNR", [&] { return fig5(runs); });
  report(6, "D2D prompt transfer", [&] { return fig6(runs); });
  report(7, "federated identities", federated_identities);
  report(8, "FlyBoosting", [&] { return flyboost(runs); });
  report(9, "budget allocation", allocation);
  report(10, "scenario replay", [&] { return replay(runs); });

  std::error_code ec;
  fs::remove_all(root, ec);
  std::printf("%d of 10 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
