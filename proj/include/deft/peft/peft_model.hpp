// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "deft/nn/lstm.hpp"
#include "deft/nn/transformer.hpp"
#include "deft/peft/lowrank.hpp"
#include "deft/peft/spec.hpp"

namespace deft::peft {

struct AttachOptions {
  InitMode init = InitMode::ZeroDelta;
  // Base-model gradients from a warm-up batch; required by Selective TopK.
  std::optional<nn::GradMap> warmup_grads;
};

// Gradients of every base parameter for a warm-up loss, computed on an
// unfrozen copy of the model.
nn::GradMap warmup_gradients(const nn::TinyTransformer& base,
                             const std::function<nn::Var(nn::Tape&, const nn::TinyTransformer&)>& loss);

class Component;

// A frozen copy of the base model with one PEFT technique (or a hybrid)
// attached. The fine-tuning parameters live in params(); the base is never
// modified.
class PeftModel : public nn::ForwardHooks {
 public:
  PeftModel(const nn::TinyTransformer& base, PeftSpec spec, std::uint64_t seed, AttachOptions options = {});
  ~PeftModel() override;
  PeftModel(const PeftModel&) = delete;
  PeftModel& operator=(const PeftModel&) = delete;

  const nn::TinyTransformer& base() const { return base_; }
  const PeftSpec& spec() const { return spec_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  // Trainable scalars by enumeration: masked deltas count their mask's
  // non-zeros, every other trainable tensor its size.
  std::size_t trainable_count() const;
  const std::set<std::string>& sites() const { return sites_; }

  std::optional<nn::Var> prompt(nn::Tape& tape) const override;
  nn::Var parameter(nn::Tape& tape, const nn::Parameter& p, nn::Var base) const override;
  std::optional<nn::KvPrefix> kv_prefix(nn::Tape& tape, std::size_t block) const override;
  nn::Var after_ffn(nn::Tape& tape, std::size_t block, nn::Var x) const override;

  nn::Var forward(nn::Tape& tape, std::span<const int> tokens) const { return base_.forward(tape, tokens, this); }

  // Prompt encoder of the (single) P-tuning component, if any.
  const nn::BiLstmEncoder* prompt_encoder() const;
  // Replaces the prefix reparameterisation with its current output; the MLP
  // and seed tables are dropped from params().
  void materialize_prefixes();

  // Fixed masks of masked-delta components, keyed by fine-tuning parameter
  // name.
  const std::map<std::string, nn::Tensor>& masks() const { return masks_; }

 private:
  nn::TinyTransformer base_;
  PeftSpec spec_;
  nn::ParameterStore params_;
  std::map<std::string, nn::Tensor> masks_;
  std::set<std::string> sites_;
  std::vector<std::unique_ptr<Component>> components_;
};

}  // namespace deft::peft
