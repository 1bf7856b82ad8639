// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "deft/nn/tensor.hpp"

namespace deft::nn {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// has not been cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Gradients of the named leaves, keyed by leaf name.
using GradMap = std::map<std::string, Tensor>;

// Reverse-mode gradient tape. Operations append nodes in evaluation order, so
// the node list is always topologically sorted. Nodes whose inputs need no
// gradient carry no backward rule.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);

  // Named leaf. Binding the same name twice returns the first node; the
  // values must agree.
  Var leaf(const std::string& name, Tensor value, bool requires_grad = true);

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  // Gradient flowing into node `id` during backward.
  const Tensor& grad(std::uint32_t id) const { return nodes_[id].grad; }
  // Accumulation slot for an input's gradient, or nullptr when the input
  // needs none. Lazily zero-initialised.
  Tensor* grad_slot(std::uint32_t id);

  // Backward from a scalar loss. Clears the tape afterwards.
  GradMap backward(Var loss);
  // Backward from an arbitrary output with an explicit upstream gradient
  // (used at split points). Clears the tape afterwards.
  GradMap backward(Var output, const Tensor& seed);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::string name;  // non-empty for named leaves
    BackwardFn backward;
  };

  Var push(Node node);
  GradMap run_backward(std::uint32_t root);

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::uint32_t> leaves_;
};

}  // namespace deft::nn
