// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/nn/tape.hpp"

#include <fmt/format.h>

#include "deft/error.hpp"

namespace deft::nn {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(const std::string& name, Tensor value, bool requires_grad) {
  if (auto it = leaves_.find(name); it != leaves_.end()) {
    const Node& existing = nodes_[it->second];
    if (!bit_identical(existing.value, value) || existing.requires_grad != requires_grad) {
      throw UsageError(fmt::format("leaf '{}' bound twice with different contents", name));
    }
    return Var(this, it->second);
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.name = name;
  Var v = push(std::move(n));
  leaves_.emplace(name, v.id());
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw UsageError("operation mixes variables from different tapes");
    if (in.requires_grad()) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor* Tape::grad_slot(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) {
    n.grad = Tensor(n.value.shape());
  }
  return &n.grad;
}

GradMap Tape::backward(Var loss) {
  if (loss.value().size() != 1) {
    throw UsageError(fmt::format("backward needs a scalar loss, got shape {}",
                                 shape_string(loss.value().shape())));
  }
  return backward(loss, Tensor(loss.value().shape(), {1.0}));
}

GradMap Tape::backward(Var output, const Tensor& seed) {
  if (&output.tape() != this) throw UsageError("backward on a variable from another tape");
  if (seed.size() != output.value().size()) {
    throw ShapeError(fmt::format("seed shape {} does not match output {}", shape_string(seed.shape()),
                                 shape_string(output.value().shape())));
  }
  if (Tensor* slot = grad_slot(output.id())) {
    *slot += seed;
  }
  return run_backward(output.id());
}

GradMap Tape::run_backward(std::uint32_t root) {
  for (std::int64_t i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward && !n.grad.empty()) n.backward(*this, static_cast<std::uint32_t>(i));
  }
  GradMap grads;
  for (const Node& n : nodes_) {
    if (!n.name.empty() && n.requires_grad && n.grad.size() == n.value.size() && !n.value.empty()) {
      grads.emplace(n.name, n.grad);
    }
  }
  clear();
  return grads;
}

void Tape::clear() {
  nodes_.clear();
  leaves_.clear();
}

}  // namespace deft::nn
