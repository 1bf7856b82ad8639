// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "deft/nn/rng.hpp"
#include "deft/nn/tape.hpp"

namespace deft::nn {

enum class ParamKind : std::uint8_t { Weight, Bias, Gain, Embedding };

struct Parameter {
  std::string name;
  Tensor value;
  ParamKind kind = ParamKind::Weight;
  int block = -1;  // transformer block index, -1 for model-level parameters
  bool trainable = true;
};

// Ordered, name-indexed parameter collection. Iteration order is insertion
// order, which keeps every derived computation deterministic.
class ParameterStore {
 public:
  Parameter& add(Parameter p);
  // Gaussian initialisation from the named stream (seed, name).
  Parameter& add_normal(const std::string& name, Shape shape, std::uint64_t seed, double stddev,
                        ParamKind kind = ParamKind::Weight, int block = -1);
  Parameter& add_constant(const std::string& name, Shape shape, double value,
                          ParamKind kind = ParamKind::Weight, int block = -1);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  void set_trainable(bool trainable);
  std::size_t scalar_count() const;
  std::size_t trainable_scalar_count() const;

  // Binds a parameter as a tape leaf; frozen parameters become leaves that
  // need no gradient.
  Var bind(Tape& tape, const std::string& name) const;

 private:
  std::vector<Parameter> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace deft::nn
