// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "deft/nn/tape.hpp"
#include "deft/peft/spec.hpp"

namespace deft::peft {

enum class InitMode { ZeroDelta, Random };

// Factors of one structured weight delta. `tunable` factors carry
// gradients; `fixed` ones are frozen random projections.
//   Plain:     tunable {U, V}
//   Fastfood:  fixed {L, R}, tunable {Z}
//   Kronecker: tunable {C_1, ..., C_n}, delta = C_1 kron ... kron C_n
struct LowRankFactors {
  LowRankConstruction construction = LowRankConstruction::Plain;
  std::size_t rows = 0, cols = 0;
  std::vector<nn::Tensor> fixed;
  std::vector<nn::Tensor> tunable;

  nn::Tensor materialize(double alpha = 1.0) const;
  std::size_t tunable_count() const;
};

// `dims` is {rank} for Plain and Fastfood and {r_1, c_1, r_2, c_2, ...} for
// Kronecker components. Fixed factors come from `seed`, tunable ones from
// `core_seed`; under ZeroDelta the first tunable factor is zero.
LowRankFactors build_lowrank(LowRankConstruction construction, std::size_t rows, std::size_t cols,
                             const std::vector<std::size_t>& dims, std::uint64_t seed,
                             InitMode init = InitMode::Random, std::uint64_t core_seed = 0);

// Kronecker component dims {r, r, rows/r, cols/r} used by LowRankSpec.
std::vector<std::size_t> kronecker_dims(std::size_t rows, std::size_t cols, std::size_t rank);

// Taped delta from bound factor variables.
nn::Var lowrank_delta(LowRankConstruction construction, const std::vector<nn::Var>& fixed,
                      const std::vector<nn::Var>& tunable, double alpha);

}  // namespace deft::peft
