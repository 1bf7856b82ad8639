// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/peft/peft_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "deft/error.hpp"
#include "deft/nn/ops.hpp"
#include "deft/nn/rng.hpp"

namespace deft::peft {

using nn::Parameter;
using nn::ParameterStore;
using nn::Tape;
using nn::Tensor;
using nn::Var;

class Component {
 public:
  virtual ~Component() = default;
  virtual std::optional<Var> prompt(Tape&) const { return std::nullopt; }
  virtual std::optional<Var> delta(Tape&, const Parameter&) const { return std::nullopt; }
  virtual std::optional<nn::KvPrefix> kv_prefix(Tape&, std::size_t) const { return std::nullopt; }
  virtual std::optional<Var> after_ffn(Tape&, std::size_t, Var) const { return std::nullopt; }
  virtual const nn::BiLstmEncoder* encoder() const { return nullptr; }
  virtual void materialize(ParameterStore&) {}
};

namespace {

std::uint64_t site_seed(std::uint64_t seed, const std::string& name) {
  return nn::splitmix64(seed ^ nn::stream_hash(name));
}

Tensor scaled_normal(std::uint64_t seed, const std::string& name, nn::Shape shape, double stddev) {
  return nn::Rng::stream(seed, name).normal_tensor(std::move(shape), stddev);
}

class PTuning : public Component {
 public:
  PTuning(const std::string& ns, const PTuningSpec& s, const nn::TransformerConfig& cfg, ParameterStore& store,
          std::uint64_t seed)
      : store_(store), encoder_(ns + "ptuning.encoder", cfg.d_model) {
    if (s.prompt_len >= cfg.max_seq) {
      throw CapacityError(fmt::format("prompt of {} rows leaves no room in max_seq {}", s.prompt_len, cfg.max_seq));
    }
    if (s.prompt_len == 0) return;
    encoder_.init(store, seed);
    init_prompt_ = scaled_normal(seed, ns + "ptuning.init_prompt", {s.prompt_len, cfg.d_model}, 1.0);
  }
  std::optional<Var> prompt(Tape& tape) const override {
    if (init_prompt_.empty()) return std::nullopt;
    return encoder_.encode(tape, store_, tape.constant(init_prompt_));
  }
  const nn::BiLstmEncoder* encoder() const override { return init_prompt_.empty() ? nullptr : &encoder_; }

 private:
  const ParameterStore& store_;
  nn::BiLstmEncoder encoder_;
  Tensor init_prompt_;
};

class Prefix : public Component {
 public:
  Prefix(const std::string& ns, const PrefixSpec& s, const nn::TransformerConfig& cfg, ParameterStore& store,
         std::uint64_t seed, InitMode)
      : ns_(ns), store_(store), lengths_(s.lengths), d_(cfg.d_model) {
    if (lengths_.size() != cfg.n_blocks) {
      throw InputError(fmt::format("prefix lengths for {} blocks, model has {}", lengths_.size(), cfg.n_blocks));
    }
    std::size_t total = 0;
    for (std::size_t b = 0; b < lengths_.size(); ++b) {
      if (lengths_[b] + 1 > cfg.max_seq) {
        throw CapacityError(fmt::format("block {} prefix of {} rows exceeds max_seq {}", b, lengths_[b], cfg.max_seq));
      }
      total += lengths_[b];
    }
    if (total == 0) return;
    const std::size_t d = d_;
    for (std::size_t b = 0; b < lengths_.size(); ++b) {
      if (lengths_[b] == 0) continue;
      const std::string n = table(b);
      store.add({n, scaled_normal(seed, n, {lengths_[b], d}, 1.0), nn::ParamKind::Embedding, static_cast<int>(b)});
    }
    store.add({ns + "prefix.mlp.w1", scaled_normal(seed, ns + "prefix.mlp.w1", {d, 4 * d}, 1.0 / std::sqrt(double(d)))});
    store.add_constant(ns + "prefix.mlp.b1", {4 * d}, 0.0, nn::ParamKind::Bias);
    store.add({ns + "prefix.mlp.w2", scaled_normal(seed, ns + "prefix.mlp.w2", {4 * d, 2 * d}, 0.02)});
    store.add_constant(ns + "prefix.mlp.b2", {2 * d}, 0.0, nn::ParamKind::Bias);
  }

  std::optional<nn::KvPrefix> kv_prefix(Tape& tape, std::size_t b) const override {
    if (b >= lengths_.size() || lengths_[b] == 0) return std::nullopt;
    if (materialized_) return nn::KvPrefix{store_.bind(tape, kname(b)), store_.bind(tape, vname(b))};
    Var h = nn::tanh(nn::add_row(nn::matmul(store_.bind(tape, table(b)), store_.bind(tape, ns_ + "prefix.mlp.w1")),
                                 store_.bind(tape, ns_ + "prefix.mlp.b1")));
    Var o = nn::add_row(nn::matmul(h, store_.bind(tape, ns_ + "prefix.mlp.w2")), store_.bind(tape, ns_ + "prefix.mlp.b2"));
    return nn::KvPrefix{nn::slice_cols(o, 0, d_), nn::slice_cols(o, d_, d_)};
  }

  void materialize(ParameterStore& store) override {
    if (materialized_) return;
    ParameterStore next;
    for (std::size_t b = 0; b < lengths_.size(); ++b) {
      if (lengths_[b] == 0) continue;
      Tape tape;
      auto kv = kv_prefix(tape, b);
      next.add({kname(b), kv->k.value(), nn::ParamKind::Embedding, static_cast<int>(b)});
      next.add({vname(b), kv->v.value(), nn::ParamKind::Embedding, static_cast<int>(b)});
    }
    for (const auto& p : store.items()) {
      if (p.name.rfind(ns_ + "prefix.", 0) != 0) next.add(p);
    }
    store = std::move(next);
    materialized_ = true;
  }

 private:
  std::string table(std::size_t b) const { return fmt::format("{}prefix.block{}.seed", ns_, b); }
  std::string kname(std::size_t b) const { return fmt::format("{}prefix.block{}.k", ns_, b); }
  std::string vname(std::size_t b) const { return fmt::format("{}prefix.block{}.v", ns_, b); }

  std::string ns_;
  const ParameterStore& store_;
  std::vector<std::size_t> lengths_;
  std::size_t d_;
  bool materialized_ = false;
};

class LowRank : public Component {
 public:
  LowRank(const std::string& ns, const LowRankSpec& s, const nn::TinyTransformer& base, ParameterStore& store,
          std::uint64_t seed, InitMode init, std::set<std::string>& sites)
      : store_(store), construction_(s.construction), alpha_(s.alpha) {
    const auto& cfg = base.config();
    if (s.ranks.size() != cfg.n_blocks) {
      throw InputError(fmt::format("ranks for {} blocks, model has {}", s.ranks.size(), cfg.n_blocks));
    }
    if (s.targets.empty()) throw InputError("low-rank spec names no target matrices");
    for (std::size_t b = 0; b < s.ranks.size(); ++b) {
      const std::size_t r = s.ranks[b];
      if (r == 0) continue;
      for (const auto& t : s.targets) {
        const std::string target = nn::TinyTransformer::block_param(b, t);
        const Parameter* p = base.params().find(target);
        if (!p || p->value.rank() != 2) throw InputError(fmt::format("no weight matrix '{}' to adapt", target));
        const std::size_t rows = p->value.rows(), cols = p->value.cols();
        const auto dims = s.construction == LowRankConstruction::Kronecker ? kronecker_dims(rows, cols, r)
                                                                          : std::vector<std::size_t>{r};
        LowRankFactors f = build_lowrank(s.construction, rows, cols, dims, site_seed(seed, "fixed." + target), init,
                                         site_seed(seed, "core." + target));
        Site site;
        for (const auto& fx : f.fixed) site.fixed.push_back(fx);
        for (std::size_t i = 0; i < f.tunable.size(); ++i) {
          const std::string n = fmt::format("{}lowrank.{}.f{}", ns, target, i);
          store.add({n, f.tunable[i], nn::ParamKind::Weight, static_cast<int>(b)});
          site.tunable.push_back(n);
        }
        sites_.emplace(target, std::move(site));
        sites.insert(target);
      }
    }
  }

  std::optional<Var> delta(Tape& tape, const Parameter& p) const override {
    auto it = sites_.find(p.name);
    if (it == sites_.end()) return std::nullopt;
    std::vector<Var> fixed, tunable;
    for (const auto& t : it->second.fixed) fixed.push_back(tape.constant(t));
    for (const auto& n : it->second.tunable) tunable.push_back(store_.bind(tape, n));
    return lowrank_delta(construction_, fixed, tunable, alpha_);
  }

 private:
  struct Site {
    std::vector<Tensor> fixed;
    std::vector<std::string> tunable;
  };
  const ParameterStore& store_;
  LowRankConstruction construction_;
  double alpha_;
  std::map<std::string, Site> sites_;
};

class Adapter : public Component {
 public:
  Adapter(const std::string& ns, const AdapterSpec& s, const nn::TransformerConfig& cfg, ParameterStore& store,
          std::uint64_t seed, InitMode init)
      : ns_(ns), store_(store) {
    if (s.bottleneck == 0) throw InputError("adapter bottleneck must be >= 1");
    const std::size_t d = cfg.d_model, m = s.bottleneck;
    for (std::size_t b : s.blocks) {
      if (b >= cfg.n_blocks) throw InputError(fmt::format("adapter block {} outside model of {} blocks", b, cfg.n_blocks));
      if (!blocks_.insert(b).second) throw InputError(fmt::format("adapter block {} listed twice", b));
      const int bi = static_cast<int>(b);
      store.add({name(b, "down.w"), scaled_normal(seed, name(b, "down.w"), {d, m}, 1.0 / std::sqrt(double(d))),
                 nn::ParamKind::Weight, bi});
      store.add_constant(name(b, "down.b"), {m}, 0.0, nn::ParamKind::Bias, bi);
      if (init == InitMode::ZeroDelta) {
        store.add_constant(name(b, "up.w"), {m, d}, 0.0, nn::ParamKind::Weight, bi);
        store.add_constant(name(b, "up.b"), {d}, 0.0, nn::ParamKind::Bias, bi);
      } else {
        store.add({name(b, "up.w"), scaled_normal(seed, name(b, "up.w"), {m, d}, 1.0 / std::sqrt(double(m))),
                   nn::ParamKind::Weight, bi});
        store.add({name(b, "up.b"), scaled_normal(seed, name(b, "up.b"), {d}, 0.1), nn::ParamKind::Bias, bi});
      }
    }
  }

  std::optional<Var> after_ffn(Tape& tape, std::size_t b, Var x) const override {
    if (!blocks_.count(b)) return std::nullopt;
    Var h = nn::relu(nn::add_row(nn::matmul(x, store_.bind(tape, name(b, "down.w"))), store_.bind(tape, name(b, "down.b"))));
    Var u = nn::add_row(nn::matmul(h, store_.bind(tape, name(b, "up.w"))), store_.bind(tape, name(b, "up.b")));
    return nn::add(x, u);
  }

 private:
  std::string name(std::size_t b, const char* role) const { return fmt::format("{}adapter.block{}.{}", ns_, b, role); }

  std::string ns_;
  const ParameterStore& store_;
  std::set<std::size_t> blocks_;
};

class Selective : public Component {
 public:
  Selective(const std::string& ns, const SelectiveSpec& s, const nn::TinyTransformer& base, ParameterStore& store,
            std::map<std::string, Tensor>& masks, std::uint64_t seed, InitMode init,
            const std::optional<nn::GradMap>& warmup, std::set<std::string>& sites)
      : store_(store), masks_(masks) {
    const auto& cfg = base.config();
    std::map<std::string, std::optional<Tensor>> chosen;  // nullopt = whole tensor
    switch (s.mode) {
      case SelectiveMode::LayerSubset:
        for (std::size_t l : s.layers)
          if (l >= cfg.n_blocks) throw InputError(fmt::format("layer {} outside model of {} blocks", l, cfg.n_blocks));
        for (const auto& p : base.params().items())
          if (p.block >= 0 && std::count(s.layers.begin(), s.layers.end(), static_cast<std::size_t>(p.block)))
            chosen.emplace(p.name, std::nullopt);
        break;
      case SelectiveMode::BiasOnly:
        for (const auto& p : base.params().items())
          if (p.kind == nn::ParamKind::Bias) chosen.emplace(p.name, std::nullopt);
        break;
      case SelectiveMode::TopK:
        select_top_k(s.k, base, warmup, chosen);
        break;
      case SelectiveMode::BinaryMask:
        for (const auto& [name, m] : s.mask) {
          const Parameter* p = base.params().find(name);
          if (!p) throw InputError(fmt::format("mask names unknown parameter '{}'", name));
          if (m.shape() != p->value.shape()) throw InputError(fmt::format("mask for '{}' has the wrong shape", name));
          for (double v : m.values())
            if (v != 0.0 && v != 1.0) throw InputError(fmt::format("mask for '{}' is not binary", name));
          chosen.emplace(name, m);
        }
        break;
    }
    for (const auto& p : base.params().items()) {
      auto it = chosen.find(p.name);
      if (it == chosen.end()) continue;
      const std::string n = ns + "selective." + p.name;
      Tensor value = init == InitMode::ZeroDelta ? Tensor(p.value.shape())
                                                  : scaled_normal(seed, n, p.value.shape(), 0.05);
      if (it->second) {
        masks_.emplace(n, *it->second);
        for (std::size_t i = 0; i < value.size(); ++i) value[i] *= (*it->second)[i];
      }
      store.add({n, std::move(value), p.kind, p.block});
      deltas_.emplace(p.name, n);
      sites.insert(p.name);
    }
  }

  std::optional<Var> delta(Tape& tape, const Parameter& p) const override {
    auto it = deltas_.find(p.name);
    if (it == deltas_.end()) return std::nullopt;
    Var d = store_.bind(tape, it->second);
    if (auto m = masks_.find(it->second); m != masks_.end()) d = nn::mul(tape.constant(m->second), d);
    return d;
  }

 private:
  static void select_top_k(std::size_t k, const nn::TinyTransformer& base, const std::optional<nn::GradMap>& warmup,
                           std::map<std::string, std::optional<Tensor>>& chosen) {
    if (!warmup) throw UsageError("top-K selection needs warm-up gradients");
    struct Entry {
      double score;
      std::size_t param, index;
    };
    std::vector<Entry> entries;
    const auto& items = base.params().items();
    for (std::size_t pi = 0; pi < items.size(); ++pi) {
      auto g = warmup->find(items[pi].name);
      for (std::size_t i = 0; i < items[pi].value.size(); ++i) {
        const double gv = g == warmup->end() ? 0.0 : g->second[i];
        entries.push_back({std::abs(items[pi].value[i] * gv), pi, i});
      }
    }
    if (k > entries.size()) throw InputError(fmt::format("top-{} exceeds the {} base parameters", k, entries.size()));
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.score > b.score; });
    for (std::size_t j = 0; j < k; ++j) {
      const Parameter& p = items[entries[j].param];
      auto& slot = chosen[p.name];
      if (!slot) slot = Tensor(p.value.shape());
      (*slot)[entries[j].index] = 1.0;
    }
  }

  const ParameterStore& store_;
  std::map<std::string, Tensor>& masks_;
  std::map<std::string, std::string> deltas_;  // base name -> delta name
};

}  // namespace

nn::GradMap warmup_gradients(const nn::TinyTransformer& base,
                             const std::function<Var(Tape&, const nn::TinyTransformer&)>& loss) {
  nn::TinyTransformer copy = base;
  copy.params().set_trainable(true);
  Tape tape;
  return tape.backward(loss(tape, copy));
}

PeftModel::PeftModel(const nn::TinyTransformer& base, PeftSpec spec, std::uint64_t seed, AttachOptions options)
    : base_(base), spec_(std::move(spec)) {
  base_.params().set_trainable(false);
  const auto leaves = flatten(spec_);
  const bool hybrid = leaves.size() > 1;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const std::string ns = hybrid ? fmt::format("h{}.", i) : "";
    std::set<std::string> sites;
    std::unique_ptr<Component> c;
    const auto& cfg = base_.config();
    const auto& leaf = leaves[i];
    if (leaf.is<PTuningSpec>()) {
      c = std::make_unique<PTuning>(ns, leaf.as<PTuningSpec>(), cfg, params_, seed);
      if (leaf.as<PTuningSpec>().prompt_len > 0) sites.insert("input.prompt");
    } else if (leaf.is<PrefixSpec>()) {
      c = std::make_unique<Prefix>(ns, leaf.as<PrefixSpec>(), cfg, params_, seed, options.init);
      const auto& l = leaf.as<PrefixSpec>().lengths;
      for (std::size_t b = 0; b < l.size(); ++b)
        if (l[b] > 0) sites.insert(fmt::format("block{}.kv", b));
    } else if (leaf.is<LowRankSpec>()) {
      c = std::make_unique<LowRank>(ns, leaf.as<LowRankSpec>(), base_, params_, seed, options.init, sites);
    } else if (leaf.is<AdapterSpec>()) {
      c = std::make_unique<Adapter>(ns, leaf.as<AdapterSpec>(), cfg, params_, seed, options.init);
      for (std::size_t b : leaf.as<AdapterSpec>().blocks) sites.insert(fmt::format("block{}.after_ffn", b));
    } else if (leaf.is<SelectiveSpec>()) {
      c = std::make_unique<Selective>(ns, leaf.as<SelectiveSpec>(), base_, params_, masks_, seed, options.init,
                                      options.warmup_grads, sites);
    }
    for (const auto& s : sites) {
      if (!sites_.insert(s).second) throw ConflictError(fmt::format("two components attach to '{}'", s));
    }
    components_.push_back(std::move(c));
  }
}

PeftModel::~PeftModel() = default;

std::size_t PeftModel::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_.items()) {
    if (!p.trainable) continue;
    if (auto m = masks_.find(p.name); m != masks_.end()) {
      for (double v : m->second.values()) n += v != 0.0 ? 1 : 0;
    } else {
      n += p.value.size();
    }
  }
  return n;
}

std::optional<Var> PeftModel::prompt(Tape& tape) const {
  for (const auto& c : components_)
    if (auto p = c->prompt(tape)) return p;
  return std::nullopt;
}

Var PeftModel::parameter(Tape& tape, const Parameter& p, Var base) const {
  for (const auto& c : components_)
    if (auto d = c->delta(tape, p)) return nn::add(base, *d);
  return base;
}

std::optional<nn::KvPrefix> PeftModel::kv_prefix(Tape& tape, std::size_t block) const {
  for (const auto& c : components_)
    if (auto kv = c->kv_prefix(tape, block)) return kv;
  return std::nullopt;
}

Var PeftModel::after_ffn(Tape& tape, std::size_t block, Var x) const {
  for (const auto& c : components_)
    if (auto y = c->after_ffn(tape, block, x)) x = *y;
  return x;
}

const nn::BiLstmEncoder* PeftModel::prompt_encoder() const {
  for (const auto& c : components_)
    if (const auto* e = c->encoder()) return e;
  return nullptr;
}

void PeftModel::materialize_prefixes() {
  for (auto& c : components_) c->materialize(params_);
}

}  // namespace deft::peft
