// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/nn/params.hpp"

#include <fmt/format.h>

#include "deft/error.hpp"

namespace deft::nn {

Parameter& ParameterStore::add(Parameter p) {
  if (contains(p.name)) throw UsageError(fmt::format("duplicate parameter '{}'", p.name));
  index_.emplace(p.name, items_.size());
  items_.push_back(std::move(p));
  return items_.back();
}

Parameter& ParameterStore::add_normal(const std::string& name, Shape shape, std::uint64_t seed,
                                      double stddev, ParamKind kind, int block) {
  Rng rng = Rng::stream(seed, name);
  return add({name, rng.normal_tensor(std::move(shape), stddev), kind, block, true});
}

Parameter& ParameterStore::add_constant(const std::string& name, Shape shape, double value,
                                        ParamKind kind, int block) {
  return add({name, Tensor::full(std::move(shape), value), kind, block, true});
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError(fmt::format("unknown parameter '{}'", name));
  return items_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError(fmt::format("unknown parameter '{}'", name));
  return items_[it->second];
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &items_[it->second];
}

void ParameterStore::set_trainable(bool trainable) {
  for (auto& p : items_) p.trainable = trainable;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.size();
  return n;
}

std::size_t ParameterStore::trainable_scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_)
    if (p.trainable) n += p.value.size();
  return n;
}

Var ParameterStore::bind(Tape& tape, const std::string& name) const {
  const Parameter& p = get(name);
  return tape.leaf(p.name, p.value, p.trainable);
}

}  // namespace deft::nn
