// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "deft/nn/params.hpp"

namespace deft::peft {

enum class ImportanceMethod { SingularValueMass, GradWeightProduct };

struct ImportanceReport {
  std::vector<double> scores;  // one per block, >= 0
  ImportanceMethod method = ImportanceMethod::SingularValueMass;
};

// Nuclear norm of each block's weight delta.
ImportanceReport importance_svd(const std::vector<nn::Tensor>& deltas);

// Sum of |w * g| over the fine-tuning parameters assigned to each block
// (Parameter::block); parameters with block -1 are shared and ignored.
ImportanceReport importance_grad_weight(const nn::ParameterStore& params, const nn::GradMap& grads,
                                        std::size_t n_blocks);

struct RankAllocation {
  std::vector<std::size_t> sizes;
  std::size_t budget = 0;
};

constexpr std::size_t kNoCap = std::numeric_limits<std::size_t>::max();

// Largest-remainder apportionment of `budget` in proportion to the scores.
// Blocks whose share exceeds their cap are pinned at the cap and the rest is
// re-apportioned among the others. Remainders within a relative 1e-9 are
// ties and go to the lower block index; all-zero scores split evenly.
RankAllocation allocate_budget(const ImportanceReport& report, std::size_t budget,
                               const std::vector<std::size_t>& caps = {});

// CSV with header block,score,allocated_size.
void write_allocation_csv(std::ostream& out, const ImportanceReport& report, const RankAllocation& alloc);

}  // namespace deft::peft
