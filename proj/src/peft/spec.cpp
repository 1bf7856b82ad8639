// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/peft/spec.hpp"

#include <set>

#include <fmt/format.h>

#include "deft/error.hpp"
#include "deft/nn/lstm.hpp"
#include "deft/peft/lowrank.hpp"

namespace deft::peft {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Attachment sites that can be named without looking at a model.
std::set<std::string> static_sites(const PeftSpec& spec) {
  std::set<std::string> out;
  std::visit(Overloaded{
                 [&](const PTuningSpec& s) {
                   if (s.prompt_len > 0) out.insert("input.prompt");
                 },
                 [&](const PrefixSpec& s) {
                   for (std::size_t b = 0; b < s.lengths.size(); ++b)
                     if (s.lengths[b] > 0) out.insert(fmt::format("block{}.kv", b));
                 },
                 [&](const LowRankSpec& s) {
                   for (std::size_t b = 0; b < s.ranks.size(); ++b)
                     if (s.ranks[b] > 0)
                       for (const auto& t : s.targets) out.insert(fmt::format("block{}.{}", b, t));
                 },
                 [&](const AdapterSpec& s) {
                   for (std::size_t b : s.blocks) out.insert(fmt::format("block{}.after_ffn", b));
                 },
                 [&](const SelectiveSpec& s) {
                   if (s.mode == SelectiveMode::BinaryMask)
                     for (const auto& [name, m] : s.mask) out.insert(name);
                 },
                 [&](const HybridSpec&) {},
             },
             spec.value);
  return out;
}

}  // namespace

std::string PeftSpec::kind() const {
  static constexpr const char* kNames[] = {"ptuning", "prefix", "lowrank", "adapter", "selective", "hybrid"};
  return kNames[value.index()];
}

std::vector<PeftSpec> flatten(const PeftSpec& spec) {
  if (!spec.is<HybridSpec>()) return {spec};
  std::vector<PeftSpec> out;
  for (const auto& c : spec.as<HybridSpec>().components) {
    auto sub = flatten(c);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

PeftSpec compose(std::vector<PeftSpec> specs) {
  if (specs.empty()) throw InputError("compose needs at least one component");
  HybridSpec h{std::move(specs)};
  std::set<std::string> seen;
  for (const auto& leaf : flatten(PeftSpec(h))) {
    for (const auto& site : static_sites(leaf)) {
      if (!seen.insert(site).second) throw ConflictError(fmt::format("two components attach to '{}'", site));
    }
  }
  return h;
}

std::size_t closed_form_trainable_count(const PeftSpec& spec, const nn::TransformerConfig& cfg,
                                        const nn::ParameterStore& base) {
  const std::size_t d = cfg.d_model;
  return std::visit(
      Overloaded{
          [&](const PTuningSpec& s) -> std::size_t {
            return s.prompt_len > 0 ? nn::BiLstmEncoder::parameter_count(d) : 0;
          },
          [&](const PrefixSpec& s) -> std::size_t {
            std::size_t rows = 0;
            for (std::size_t p : s.lengths) rows += p;
            if (rows == 0) return 0;
            return rows * d + (d * 4 * d + 4 * d) + (4 * d * 2 * d + 2 * d);
          },
          [&](const LowRankSpec& s) -> std::size_t {
            std::size_t n = 0;
            for (std::size_t b = 0; b < s.ranks.size(); ++b) {
              const std::size_t r = s.ranks[b];
              if (r == 0) continue;
              for (const auto& t : s.targets) {
                const nn::Tensor& w = base.get(fmt::format("block{}.{}", b, t)).value;
                const std::size_t rows = w.rows(), cols = w.cols();
                switch (s.construction) {
                  case LowRankConstruction::Plain: n += r * (rows + cols); break;
                  case LowRankConstruction::Fastfood: n += r * r; break;
                  case LowRankConstruction::Kronecker: n += r * r + (rows / r) * (cols / r); break;
                }
              }
            }
            return n;
          },
          [&](const AdapterSpec& s) -> std::size_t {
            const std::size_t m = s.bottleneck;
            return s.blocks.size() * (2 * d * m + m + d);
          },
          [&](const SelectiveSpec& s) -> std::size_t {
            std::size_t n = 0;
            switch (s.mode) {
              case SelectiveMode::LayerSubset:
                for (const auto& p : base.items())
                  for (std::size_t l : s.layers)
                    if (p.block == static_cast<int>(l)) n += p.value.size();
                return n;
              case SelectiveMode::BiasOnly:
                for (const auto& p : base.items())
                  if (p.kind == nn::ParamKind::Bias) n += p.value.size();
                return n;
              case SelectiveMode::TopK:
                return s.k;
              case SelectiveMode::BinaryMask:
                for (const auto& [name, m] : s.mask)
                  for (double v : m.values()) n += v != 0.0 ? 1 : 0;
                return n;
            }
            return n;
          },
          [&](const HybridSpec& h) -> std::size_t {
            std::size_t n = 0;
            for (const auto& c : h.components) n += closed_form_trainable_count(c, cfg, base);
            return n;
          },
      },
      spec.value);
}

}  // namespace deft::peft
