// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "deft/nn/params.hpp"

namespace deft::nn {

// Prompt encoder: a bidirectional LSTM (standard four-gate cells, hidden
// width = model width) followed by two MLP layers, mapping an [L, d] initial
// prompt to an [L, d] soft prompt. Parameters live in a caller-owned store
// under `prefix`.
class BiLstmEncoder {
 public:
  BiLstmEncoder(std::string prefix, std::size_t width) : prefix_(std::move(prefix)), width_(width) {}

  void init(ParameterStore& store, std::uint64_t seed) const;
  Var encode(Tape& tape, const ParameterStore& store, Var init_prompt) const;

  std::size_t width() const { return width_; }
  const std::string& prefix() const { return prefix_; }
  std::string name(const std::string& role) const { return prefix_ + "." + role; }

  // 2 directions x 4 gates x (input + recurrent + bias), plus the two MLPs.
  static std::size_t parameter_count(std::size_t d) {
    return 2 * 4 * d * (d + d + 1) + (2 * d * d + d) + (d * d + d);
  }

 private:
  Var run_direction(Tape& tape, const ParameterStore& store, Var input, const std::string& dir,
                    bool reverse) const;

  std::string prefix_;
  std::size_t width_;
};

}  // namespace deft::nn
