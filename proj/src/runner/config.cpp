// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/runner/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "deft/error.hpp"

namespace deft::runner {

namespace {

using protocols::LinkKind;

// ---------------------------------------------------------------- reading

template <typename E>
using EnumNames = std::initializer_list<std::pair<const char*, E>>;

const EnumNames<ProtocolKind> kProtocols{{"single_device_split", ProtocolKind::SingleDeviceSplit},
                                         {"federated_emulator", ProtocolKind::FederatedEmulator},
                                         {"federated_server_assisted", ProtocolKind::FederatedServerAssisted},
                                         {"flyboost", ProtocolKind::FlyBoost},
                                         {"d2d_transfer", ProtocolKind::D2DTransfer}};
const EnumNames<LinkKind> kLinks{{"digital", LinkKind::Digital}, {"aircomp", LinkKind::AirComp}};
const EnumNames<tasks::ShardMode> kShardModes{{"iid", tasks::ShardMode::Iid},
                                              {"task_clustered", tasks::ShardMode::TaskClustered}};
const EnumNames<protocols::AttentionMode> kAttentionModes{{"per_source", protocols::AttentionMode::PerSource},
                                                          {"per_coefficient",
                                                           protocols::AttentionMode::PerCoefficient}};
const EnumNames<peft::LowRankConstruction> kConstructions{{"plain", peft::LowRankConstruction::Plain},
                                                          {"fastfood", peft::LowRankConstruction::Fastfood},
                                                          {"kronecker", peft::LowRankConstruction::Kronecker}};
const EnumNames<peft::SelectiveMode> kSelectiveModes{{"layer_subset", peft::SelectiveMode::LayerSubset},
                                                     {"bias_only", peft::SelectiveMode::BiasOnly},
                                                     {"top_k", peft::SelectiveMode::TopK},
                                                     {"binary_mask", peft::SelectiveMode::BinaryMask}};

template <typename E>
const char* name_of(const EnumNames<E>& names, E value) {
  for (const auto& [n, v] : names)
    if (v == value) return n;
  throw ConsistencyError("enum value without a name");
}

class Section {
 public:
  Section(const std::string& source, YAML::Node node, std::string path, int fallback_line = 0)
      : source_(source), node_(std::move(node)), path_(std::move(path)), fallback_line_(fallback_line) {
    if (node_.IsDefined() && !node_.IsNull() && !node_.IsMap()) fail(node_, path_, "expected a mapping");
  }

  [[noreturn]] void fail(const YAML::Node& at, const std::string& path, const std::string& msg) const {
    const YAML::Mark mark = at.Mark();
    int line = mark.is_null() ? node_.Mark().line : mark.line;
    if (line < 0) line = fallback_line_;
    throw ConfigError(fmt::format("{}:{}: {}: {}", source_, line + 1, path.empty() ? "<root>" : path, msg));
  }
  [[noreturn]] void fail(const std::string& msg) const { fail(node_, path_, msg); }

  std::string key_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const char* key) const { return node_.IsMap() && node_[key].IsDefined(); }

  YAML::Node raw(const char* key) {
    seen_.insert(key);
    return node_.IsMap() ? node_[key] : YAML::Node();
  }

  // An absent subsection reports errors at its parent's line.
  Section sub(const char* key) { return Section(source_, raw(key), key_path(key), line()); }
  int line() const {
    const YAML::Mark mark = node_.Mark();
    return mark.is_null() || mark.line < 0 ? fallback_line_ : mark.line;
  }

  template <typename T>
  Section& opt(const char* key, T& out) {
    if (!has(key)) {
      seen_.insert(key);
      return *this;
    }
    const YAML::Node n = raw(key);
    decode(n, key_path(key), out);
    return *this;
  }

  template <typename T>
  Section& req(const char* key, T& out) {
    if (!has(key)) fail(fmt::format("missing required key '{}'", key));
    return opt(key, out);
  }

  template <typename E>
  Section& opt_enum(const char* key, E& out, const EnumNames<E>& names) {
    if (!has(key)) {
      seen_.insert(key);
      return *this;
    }
    const YAML::Node n = raw(key);
    out = decode_enum(n, key_path(key), names);
    return *this;
  }

  template <typename E>
  E decode_enum(const YAML::Node& n, const std::string& path, const EnumNames<E>& names) const {
    std::string s;
    decode(n, path, s);
    std::string options;
    for (const auto& [name, value] : names) {
      if (s == name) return value;
      options += options.empty() ? name : std::string(", ") + name;
    }
    fail(n, path, fmt::format("unknown value '{}' (expected one of: {})", s, options));
  }

  // Unknown keys are errors so that typos do not silently fall back to
  // defaults.
  void done() const {
    if (!node_.IsMap()) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.Scalar();
      if (!seen_.count(key)) fail(kv.first, key_path(key.c_str()), "unknown key");
    }
  }

  const YAML::Node& node() const { return node_; }
  const std::string& source() const { return source_; }
  const std::string& path() const { return path_; }

  void decode(const YAML::Node& n, const std::string& path, std::string& out) const {
    if (!n.IsScalar()) fail(n, path, "expected a scalar");
    out = n.Scalar();
  }
  void decode(const YAML::Node& n, const std::string& path, bool& out) const {
    std::string s;
    decode(n, path, s);
    if (s == "true") out = true;
    else if (s == "false") out = false;
    else fail(n, path, fmt::format("expected true or false, got '{}'", s));
  }
  void decode(const YAML::Node& n, const std::string& path, double& out) const {
    std::string s;
    decode(n, path, s);
    if (s == ".inf" || s == "+.inf") {
      out = std::numeric_limits<double>::infinity();
      return;
    }
    if (s == "-.inf") {
      out = -std::numeric_limits<double>::infinity();
      return;
    }
    std::istringstream in(s);
    in.imbue(std::locale::classic());
    double v = 0.0;
    in >> v;
    if (in.fail() || !in.eof() || s.empty()) fail(n, path, fmt::format("expected a number, got '{}'", s));
    out = v;
  }
  void decode(const YAML::Node& n, const std::string& path, unsigned long long& out) const {
    std::string s;
    decode(n, path, s);
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
      fail(n, path, fmt::format("expected a non-negative integer, got '{}'", s));
    }
  }
  void decode(const YAML::Node& n, const std::string& path, unsigned long& out) const {
    unsigned long long v = 0;
    decode(n, path, v);
    out = static_cast<unsigned long>(v);
  }
  void decode(const YAML::Node& n, const std::string& path, int& out) const {
    std::string s;
    decode(n, path, s);
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
      fail(n, path, fmt::format("expected an integer, got '{}'", s));
    }
  }
  template <typename T>
  void decode(const YAML::Node& n, const std::string& path, std::vector<T>& out) const {
    if (!n.IsSequence()) fail(n, path, "expected a list");
    out.clear();
    for (std::size_t i = 0; i < n.size(); ++i) {
      T v{};
      decode(n[i], fmt::format("{}[{}]", path, i), v);
      out.push_back(std::move(v));
    }
  }

 private:
  const std::string& source_;
  YAML::Node node_;
  std::string path_;
  int fallback_line_ = 0;
  std::set<std::string> seen_;
};

// Runs a library validate() and reports its message against a section.
template <typename F>
void check(const Section& s, F&& validate) {
  try {
    validate();
  } catch (const Error& e) {
    s.fail(e.what());
  }
}

peft::PeftSpec read_peft(Section s);

void read_peft_into(Section& s, peft::PeftSpec& out) {
  std::string kind;
  s.req("kind", kind);
  if (kind == "ptuning") {
    peft::PTuningSpec p;
    s.opt("prompt_len", p.prompt_len);
    out = p;
  } else if (kind == "prefix") {
    peft::PrefixSpec p;
    s.req("lengths", p.lengths);
    out = p;
  } else if (kind == "low_rank") {
    peft::LowRankSpec p;
    s.req("ranks", p.ranks);
    s.opt_enum("construction", p.construction, kConstructions).opt("alpha", p.alpha).opt("targets", p.targets);
    out = p;
  } else if (kind == "adapter") {
    peft::AdapterSpec p;
    s.opt("bottleneck", p.bottleneck).opt("blocks", p.blocks);
    out = p;
  } else if (kind == "selective") {
    peft::SelectiveSpec p;
    s.opt_enum("mode", p.mode, kSelectiveModes).opt("layers", p.layers).opt("k", p.k);
    Section masks = s.sub("mask");
    if (masks.node().IsMap()) {
      for (const auto& kv : masks.node()) {
        const std::string name = kv.first.Scalar();
        Section m = masks.sub(name.c_str());
        nn::Shape shape;
        std::vector<double> values;
        m.req("shape", shape).req("values", values);
        m.done();
        if (nn::shape_size(shape) != values.size()) m.fail("mask value count does not match its shape");
        p.mask.emplace(name, nn::Tensor(shape, values));
      }
    }
    masks.done();
    out = p;
  } else if (kind == "hybrid") {
    peft::HybridSpec p;
    const YAML::Node list = s.raw("components");
    if (!list.IsSequence() || list.size() == 0) s.fail("hybrid needs a non-empty 'components' list");
    for (std::size_t i = 0; i < list.size(); ++i)
      p.components.push_back(read_peft(Section(s.source(), list[i], fmt::format("{}.components[{}]", s.path(), i))));
    out = p;
  } else {
    s.fail(fmt::format("unknown peft kind '{}'", kind));
  }
}

peft::PeftSpec read_peft(Section s) {
  peft::PeftSpec out;
  read_peft_into(s, out);
  s.done();
  return out;
}

void read_digital(Section s, channel::DigitalLinkConfig& c) {
  s.opt("snr_db", c.snr_db)
      .opt("bandwidth_hz", c.bandwidth_hz)
      .opt("bits_per_coeff", c.bits_per_coeff)
      .opt("n_sharing_users", c.n_sharing_users)
      .opt("lossless", c.lossless);
  s.done();
  check(s, [&] { c.validate(); });
}

void read_aircomp(Section s, channel::AirCompConfig& c) {
  s.opt("snr_db", c.snr_db)
      .opt("n_tx", c.n_tx)
      .opt("n_rx", c.n_rx)
      .opt("symbol_rate_hz", c.symbol_rate_hz)
      .opt("noiseless", c.noiseless);
  s.done();
  check(s, [&] { c.validate(); });
}

void read_task(Section s, TaskSpec& t) {
  s.opt("seed", t.seed).opt("relations", t.relations).opt("family", t.family)
      .opt("examples_per_relation", t.examples_per_relation);
  s.done();
}

std::vector<LinkKind> read_links(Section& s) {
  std::vector<LinkKind> links;
  const YAML::Node n = s.raw("links");
  if (!n.IsDefined()) return {};
  if (!n.IsSequence() || n.size() == 0) s.fail(n, s.key_path("links"), "expected a non-empty list of links");
  for (std::size_t i = 0; i < n.size(); ++i)
    links.push_back(s.decode_enum(n[i], fmt::format("{}[{}]", s.key_path("links"), i), kLinks));
  return links;
}

void read_protocol(Section s, RunConfig& cfg) {
  s.opt_enum("kind", cfg.protocol, kProtocols);
  if (!s.has("kind")) s.fail("missing required key 'kind'");
  switch (cfg.protocol) {
    case ProtocolKind::SingleDeviceSplit: {
      auto& c = cfg.split.config;
      if (s.has("peft")) c.peft = read_peft(s.sub("peft"));
      s.opt("epochs", c.epochs)
          .opt("iters_per_epoch", c.iters_per_epoch)
          .opt("batch_size", c.batch_size)
          .opt("learning_rate", c.learning_rate)
          .opt("device_speed", c.device.relative_compute_speed)
          .opt("server_flops", c.compute.server_flops)
          .opt("raw_coeffs_per_example", c.raw_coeffs_per_example)
          .opt("centralized_baseline", cfg.split.centralized_baseline);
      if (s.has("link")) read_digital(s.sub("link"), c.link);
      c.seed = cfg.seed;
      s.done();
      check(s, [&] { c.validate(); });
      break;
    }
    case ProtocolKind::FederatedEmulator:
    case ProtocolKind::FederatedServerAssisted: {
      auto& c = cfg.federated.config;
      c.paradigm = cfg.protocol == ProtocolKind::FederatedEmulator ? protocols::FederatedParadigm::Emulator
                                                                   : protocols::FederatedParadigm::ServerAssisted;
      if (s.has("peft")) c.peft = read_peft(s.sub("peft"));
      s.opt("n_devices", c.n_devices)
          .opt("epochs", c.epochs)
          .opt("iters_per_epoch", c.iters_per_epoch)
          .opt("batch_size", c.batch_size)
          .opt("learning_rate", c.learning_rate)
          .opt_enum("shard_mode", c.shard_mode, kShardModes)
          .opt("device_speed", c.device_speed)
          .opt("server_flops", c.compute.server_flops);
      if (cfg.protocol == ProtocolKind::FederatedEmulator) s.opt("keep_fraction", c.keep_fraction);
      if (auto links = read_links(s); !links.empty()) cfg.federated.links = std::move(links);
      if (s.has("digital")) read_digital(s.sub("digital"), c.link.digital);
      if (s.has("aircomp")) read_aircomp(s.sub("aircomp"), c.link.aircomp);
      c.seed = cfg.seed;
      s.done();
      check(s, [&] { c.validate(); });
      break;
    }
    case ProtocolKind::FlyBoost: {
      auto& c = cfg.flyboost.config;
      s.opt("threshold", c.threshold)
          .opt("max_rounds", c.max_rounds)
          .opt("paths_per_device", c.paths_per_device)
          .opt("path_depth", c.path_depth)
          .opt("ensemble_cap", c.ensemble_cap)
          .opt("max_selected", c.max_selected)
          .opt("importance_weight", c.importance_weight)
          .opt("prompt_len", c.prompt_len)
          .opt("local_epochs", c.local_epochs)
          .opt("batch_size", c.batch_size)
          .opt("learning_rate", c.learning_rate)
          .opt("device_speed", c.device_speed)
          .opt("server_flops", c.compute.server_flops);
      if (s.has("link")) read_digital(s.sub("link"), c.link);
      const YAML::Node list = s.raw("tasks");
      if (!list.IsSequence() || list.size() == 0) s.fail("flyboost needs a non-empty 'tasks' list, one per device");
      cfg.flyboost.tasks.clear();
      for (std::size_t i = 0; i < list.size(); ++i) {
        TaskSpec t;
        read_task(Section(s.source(), list[i], fmt::format("{}[{}]", s.key_path("tasks"), i)), t);
        cfg.flyboost.tasks.push_back(t);
      }
      c.seed = cfg.seed;
      s.done();
      check(s, [&] { c.validate(); });
      break;
    }
    case ProtocolKind::D2DTransfer: {
      auto& c = cfg.d2d.config;
      s.opt("n_sources", c.n_sources)
          .opt_enum("mode", c.mode, kAttentionModes)
          .opt("prompt_len", c.prompt_len)
          .opt("epochs", c.epochs)
          .opt("iters_per_epoch", c.iters_per_epoch)
          .opt("batch_size", c.batch_size)
          .opt("learning_rate", c.fuse.learning_rate)
          .opt("max_grad_norm", c.fuse.max_grad_norm)
          .opt("source_epochs", c.source_epochs)
          .opt("source_learning_rate", c.source_learning_rate)
          .opt("relations_per_task", c.relations_per_task)
          .opt("target_family", c.target_family)
          .opt("replicates", cfg.d2d.replicates);
      if (auto links = read_links(s); !links.empty()) cfg.d2d.links = std::move(links);
      if (s.has("digital")) read_digital(s.sub("digital"), c.link.digital);
      if (s.has("aircomp")) read_aircomp(s.sub("aircomp"), c.link.aircomp);
      c.seed = cfg.seed;
      s.done();
      check(s, [&] { c.validate(); });
      if (cfg.d2d.replicates < 1) s.fail("replicates must be >= 1");
      // Source task seeds are seed * 100 + k and the target's seed * 100 + 99.
      if (c.n_sources > 99) s.fail("at most 99 sources");
      if (c.target_family >= cfg.world.n_families) s.fail("target_family is outside the world");
      break;
    }
  }
}

// ---------------------------------------------------------------- writing

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
  return fmt::format("{}", v);
}
std::string num(std::size_t v) { return fmt::format("{}", v); }
std::string boolean(bool v) { return v ? "true" : "false"; }

template <typename T>
YAML::Node flow_list(const std::vector<T>& values) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (const auto& v : values) {
    if constexpr (std::is_same_v<T, std::string>) n.push_back(v);
    else n.push_back(num(v));
  }
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

YAML::Node write_peft(const peft::PeftSpec& spec) {
  YAML::Node n;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, peft::PTuningSpec>) {
          n["kind"] = "ptuning";
          n["prompt_len"] = num(p.prompt_len);
        } else if constexpr (std::is_same_v<T, peft::PrefixSpec>) {
          n["kind"] = "prefix";
          n["lengths"] = flow_list(p.lengths);
        } else if constexpr (std::is_same_v<T, peft::LowRankSpec>) {
          n["kind"] = "low_rank";
          n["ranks"] = flow_list(p.ranks);
          n["construction"] = name_of(kConstructions, p.construction);
          n["alpha"] = num(p.alpha);
          n["targets"] = flow_list(p.targets);
        } else if constexpr (std::is_same_v<T, peft::AdapterSpec>) {
          n["kind"] = "adapter";
          n["bottleneck"] = num(p.bottleneck);
          n["blocks"] = flow_list(p.blocks);
        } else if constexpr (std::is_same_v<T, peft::SelectiveSpec>) {
          n["kind"] = "selective";
          n["mode"] = name_of(kSelectiveModes, p.mode);
          n["layers"] = flow_list(p.layers);
          n["k"] = num(p.k);
          YAML::Node masks(YAML::NodeType::Map);
          for (const auto& [name, t] : p.mask) {
            std::vector<double> values(t.size());
            for (std::size_t i = 0; i < t.size(); ++i) values[i] = t[i];
            masks[name]["shape"] = flow_list(t.shape());
            masks[name]["values"] = flow_list(values);
          }
          n["mask"] = masks;
        } else {
          n["kind"] = "hybrid";
          YAML::Node list(YAML::NodeType::Sequence);
          for (const auto& c : p.components) list.push_back(write_peft(c));
          n["components"] = list;
        }
      },
      spec.value);
  return n;
}

YAML::Node write_digital(const channel::DigitalLinkConfig& c) {
  YAML::Node n;
  n["snr_db"] = num(c.snr_db);
  n["bandwidth_hz"] = num(c.bandwidth_hz);
  n["bits_per_coeff"] = num(c.bits_per_coeff);
  n["n_sharing_users"] = num(c.n_sharing_users);
  n["lossless"] = boolean(c.lossless);
  return n;
}

YAML::Node write_aircomp(const channel::AirCompConfig& c) {
  YAML::Node n;
  n["snr_db"] = num(c.snr_db);
  n["n_tx"] = num(c.n_tx);
  n["n_rx"] = num(c.n_rx);
  n["symbol_rate_hz"] = num(c.symbol_rate_hz);
  n["noiseless"] = boolean(c.noiseless);
  return n;
}

YAML::Node write_task(const TaskSpec& t) {
  YAML::Node n;
  n["seed"] = num(t.seed);
  n["relations"] = num(t.relations);
  n["family"] = num(t.family);
  n["examples_per_relation"] = num(t.examples_per_relation);
  return n;
}

YAML::Node write_links(const std::vector<LinkKind>& links) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (const LinkKind k : links) n.push_back(name_of(kLinks, k));
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

YAML::Node write_protocol(const RunConfig& cfg) {
  YAML::Node n;
  n["kind"] = name_of(kProtocols, cfg.protocol);
  switch (cfg.protocol) {
    case ProtocolKind::SingleDeviceSplit: {
      const auto& c = cfg.split.config;
      n["peft"] = write_peft(c.peft);
      n["epochs"] = num(c.epochs);
      n["iters_per_epoch"] = num(c.iters_per_epoch);
      n["batch_size"] = num(c.batch_size);
      n["learning_rate"] = num(c.learning_rate);
      n["device_speed"] = num(c.device.relative_compute_speed);
      n["server_flops"] = num(c.compute.server_flops);
      n["raw_coeffs_per_example"] = num(c.raw_coeffs_per_example);
      n["centralized_baseline"] = boolean(cfg.split.centralized_baseline);
      n["link"] = write_digital(c.link);
      break;
    }
    case ProtocolKind::FederatedEmulator:
    case ProtocolKind::FederatedServerAssisted: {
      const auto& c = cfg.federated.config;
      n["peft"] = write_peft(c.peft);
      n["n_devices"] = num(c.n_devices);
      if (cfg.protocol == ProtocolKind::FederatedEmulator) n["keep_fraction"] = num(c.keep_fraction);
      n["epochs"] = num(c.epochs);
      n["iters_per_epoch"] = num(c.iters_per_epoch);
      n["batch_size"] = num(c.batch_size);
      n["learning_rate"] = num(c.learning_rate);
      n["shard_mode"] = name_of(kShardModes, c.shard_mode);
      n["device_speed"] = num(c.device_speed);
      n["server_flops"] = num(c.compute.server_flops);
      n["links"] = write_links(cfg.federated.links);
      n["digital"] = write_digital(c.link.digital);
      n["aircomp"] = write_aircomp(c.link.aircomp);
      break;
    }
    case ProtocolKind::FlyBoost: {
      const auto& c = cfg.flyboost.config;
      n["threshold"] = num(c.threshold);
      n["max_rounds"] = num(c.max_rounds);
      n["paths_per_device"] = num(c.paths_per_device);
      n["path_depth"] = num(c.path_depth);
      n["ensemble_cap"] = num(c.ensemble_cap);
      n["max_selected"] = num(c.max_selected);
      n["importance_weight"] = num(c.importance_weight);
      n["prompt_len"] = num(c.prompt_len);
      n["local_epochs"] = num(c.local_epochs);
      n["batch_size"] = num(c.batch_size);
      n["learning_rate"] = num(c.learning_rate);
      n["device_speed"] = num(c.device_speed);
      n["server_flops"] = num(c.compute.server_flops);
      n["link"] = write_digital(c.link);
      YAML::Node list(YAML::NodeType::Sequence);
      for (const auto& t : cfg.flyboost.tasks) {
        YAML::Node tn = write_task(t);
        tn.SetStyle(YAML::EmitterStyle::Flow);
        list.push_back(tn);
      }
      n["tasks"] = list;
      break;
    }
    case ProtocolKind::D2DTransfer: {
      const auto& c = cfg.d2d.config;
      n["n_sources"] = num(c.n_sources);
      n["mode"] = name_of(kAttentionModes, c.mode);
      n["prompt_len"] = num(c.prompt_len);
      n["epochs"] = num(c.epochs);
      n["iters_per_epoch"] = num(c.iters_per_epoch);
      n["batch_size"] = num(c.batch_size);
      n["learning_rate"] = num(c.fuse.learning_rate);
      n["max_grad_norm"] = num(c.fuse.max_grad_norm);
      n["source_epochs"] = num(c.source_epochs);
      n["source_learning_rate"] = num(c.source_learning_rate);
      n["relations_per_task"] = num(c.relations_per_task);
      n["target_family"] = num(c.target_family);
      n["replicates"] = num(cfg.d2d.replicates);
      n["links"] = write_links(cfg.d2d.links);
      n["digital"] = write_digital(c.link.digital);
      n["aircomp"] = write_aircomp(c.link.aircomp);
      break;
    }
  }
  return n;
}

bool uses_task(ProtocolKind k) {
  return k == ProtocolKind::SingleDeviceSplit || k == ProtocolKind::FederatedEmulator ||
         k == ProtocolKind::FederatedServerAssisted;
}

YAML::Node to_node(const RunConfig& cfg) {
  YAML::Node n;
  n["config_version"] = fmt::format("{}", cfg.config_version);
  n["name"] = cfg.name;
  n["description"] = cfg.description;
  n["seed"] = num(cfg.seed);
  YAML::Node model;
  model["n_blocks"] = num(cfg.model.n_blocks);
  model["d_model"] = num(cfg.model.d_model);
  model["n_heads"] = num(cfg.model.n_heads);
  model["d_ff"] = num(cfg.model.d_ff);
  model["vocab_size"] = num(cfg.model.vocab_size);
  model["max_seq"] = num(cfg.model.max_seq);
  model["seed"] = num(cfg.model_seed);
  n["model"] = model;
  YAML::Node world;
  world["n_families"] = num(cfg.world.n_families);
  world["n_entities"] = num(cfg.world.n_entities);
  world["n_fillers"] = num(cfg.world.n_fillers);
  world["template_len"] = num(cfg.world.template_len);
  world["seed"] = num(cfg.world.seed);
  n["world"] = world;
  YAML::Node pre;
  pre["epochs"] = num(cfg.pretrain.epochs);
  pre["batch_size"] = num(cfg.pretrain.batch_size);
  pre["learning_rate"] = num(cfg.pretrain.learning_rate);
  pre["examples_per_fact"] = num(cfg.pretrain.examples_per_fact);
  pre["seed"] = num(cfg.pretrain.seed);
  n["pretrain"] = pre;
  if (uses_task(cfg.protocol)) n["task"] = write_task(cfg.task);
  n["protocol"] = write_protocol(cfg);
  if (cfg.sweep) {
    YAML::Node sweep;
    sweep["axis"] = cfg.sweep->axis;
    sweep["values"] = flow_list(cfg.sweep->values);
    n["sweep"] = sweep;
  }
  n["output_dir"] = cfg.output_dir;
  return n;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '.') {
      parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(std::move(cur));
  return parts;
}

// Follows a dotted path through nested maps; undefined node when absent.
YAML::Node find_path(const YAML::Node& root, const std::string& path) {
  YAML::Node walk;
  walk.reset(root);
  for (const auto& part : split_path(path)) {
    if (part.empty() || !walk.IsMap() || !walk[part].IsDefined()) return YAML::Node(YAML::NodeType::Undefined);
    YAML::Node next = walk[part];
    walk.reset(next);
  }
  return walk;
}

void set_path(YAML::Node& root, const std::string& path, const std::string& value) {
  YAML::Node walk;
  walk.reset(root);
  const auto parts = split_path(path);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = walk[parts[i]];
    walk.reset(next);
  }
  walk[parts.back()] = value;
}

}  // namespace

const char* to_string(ProtocolKind k) { return name_of(kProtocols, k); }

RunConfig parse_config(std::string_view text, std::string_view source_view) {
  const std::string source(source_view);
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("{}:{}: {}", source, e.mark.line + 1, e.msg));
  }
  Section s(source, root, "");
  if (!root.IsMap()) s.fail("a run configuration must be a mapping");
  RunConfig cfg;
  s.req("config_version", cfg.config_version);
  if (cfg.config_version != kConfigVersion) {
    s.fail(root["config_version"], "config_version",
           fmt::format("unsupported version {} (this build reads {})", cfg.config_version, kConfigVersion));
  }
  s.opt("name", cfg.name).opt("description", cfg.description).opt("seed", cfg.seed);
  {
    Section m = s.sub("model");
    m.opt("n_blocks", cfg.model.n_blocks)
        .opt("d_model", cfg.model.d_model)
        .opt("n_heads", cfg.model.n_heads)
        .opt("d_ff", cfg.model.d_ff)
        .opt("vocab_size", cfg.model.vocab_size)
        .opt("max_seq", cfg.model.max_seq)
        .opt("seed", cfg.model_seed);
    m.done();
    check(m, [&] { cfg.model.validate(); });
  }
  {
    Section w = s.sub("world");
    w.opt("n_families", cfg.world.n_families)
        .opt("n_entities", cfg.world.n_entities)
        .opt("n_fillers", cfg.world.n_fillers)
        .opt("template_len", cfg.world.template_len)
        .opt("seed", cfg.world.seed);
    w.done();
    check(w, [&] { cfg.world.validate(); });
    if (cfg.world.vocab_size() != cfg.model.vocab_size) {
      const YAML::Node model = root["model"];
      const YAML::Node at = model.IsMap() && model["vocab_size"].IsDefined() ? model["vocab_size"] : w.node();
      w.fail(at, "model.vocab_size",
             fmt::format("model has {} tokens but the world vocabulary is {}", cfg.model.vocab_size,
                         cfg.world.vocab_size()));
    }
  }
  {
    Section p = s.sub("pretrain");
    p.opt("epochs", cfg.pretrain.epochs)
        .opt("batch_size", cfg.pretrain.batch_size)
        .opt("learning_rate", cfg.pretrain.learning_rate)
        .opt("examples_per_fact", cfg.pretrain.examples_per_fact)
        .opt("seed", cfg.pretrain.seed);
    p.done();
  }
  if (!s.has("protocol")) s.fail("missing required key 'protocol'");
  read_protocol(s.sub("protocol"), cfg);
  if (uses_task(cfg.protocol)) {
    read_task(s.sub("task"), cfg.task);
  } else if (s.has("task")) {
    s.fail(root["task"], "task", "not used by this protocol");
  }
  if (s.has("sweep")) {
    Section w = s.sub("sweep");
    SweepSpec sweep;
    w.req("axis", sweep.axis).req("values", sweep.values);
    w.done();
    try {
      resolve_axis(cfg, sweep.axis);
    } catch (const UsageError& e) {
      w.fail(e.what());
    }
    cfg.sweep = std::move(sweep);
  }
  s.opt("output_dir", cfg.output_dir);
  if (cfg.output_dir.empty()) cfg.output_dir = cfg.name;
  s.done();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("{}: cannot open configuration file", path));
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path);
}

std::string to_yaml(const RunConfig& cfg) {
  YAML::Emitter out;
  out << to_node(cfg);
  return std::string(out.c_str()) + "\n";
}

std::vector<std::string> resolve_axis(const RunConfig& cfg, const std::string& axis) {
  std::vector<std::string> paths;
  const bool two_links = cfg.protocol == ProtocolKind::FederatedEmulator ||
                         cfg.protocol == ProtocolKind::FederatedServerAssisted ||
                         cfg.protocol == ProtocolKind::D2DTransfer;
  if (axis == "snr_db") {
    if (two_links) paths = {"protocol.digital.snr_db", "protocol.aircomp.snr_db"};
    else paths = {"protocol.link.snr_db"};
  } else if (axis == "epochs") {
    paths = {cfg.protocol == ProtocolKind::FlyBoost ? "protocol.max_rounds" : "protocol.epochs"};
  } else {
    paths = {axis};
  }
  const YAML::Node root = to_node(cfg);
  for (const auto& p : paths) {
    const YAML::Node n = find_path(root, p);
    if (!n.IsDefined() || !n.IsScalar() || p == "config_version" || p == "protocol.kind") {
      throw UsageError(fmt::format("unknown sweep axis '{}' for protocol {}", axis, to_string(cfg.protocol)));
    }
  }
  return paths;
}

std::string axis_column(const std::string& axis) {
  const auto parts = split_path(axis);
  return parts.back();
}

RunConfig with_axis_value(const RunConfig& cfg, const std::string& axis, double value) {
  YAML::Node root = to_node(cfg);
  for (const auto& p : resolve_axis(cfg, axis)) set_path(root, p, num(value));
  root.remove("sweep");
  YAML::Emitter out;
  out << root;
  RunConfig point = parse_config(out.c_str(), fmt::format("{} [{} = {}]", cfg.name, axis, num(value)));
  point.output_dir = cfg.output_dir;
  return point;
}

}  // namespace deft::runner
