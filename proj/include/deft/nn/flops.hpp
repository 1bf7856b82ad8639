// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "deft/nn/transformer.hpp"

// Closed-form multiply-add counts (2 flops each) for the compute-latency
// model. Element-wise work is ignored; a backward pass is counted as twice
// the forward.
namespace deft::nn::flops {

// One transformer block over `rows` stream rows grouped into sequences of
// `group_len`, with `prefix_len` extra key/value rows.
double block_forward(const TransformerConfig& cfg, std::size_t rows, std::size_t group_len,
                     std::size_t prefix_len = 0);

// Final norm plus output head over `rows` rows.
double head_forward(const TransformerConfig& cfg, std::size_t rows);

double bilstm_forward(std::size_t prompt_len, std::size_t width);

// Down/up projection of an adapter with bottleneck `m` over `rows` rows.
double adapter_forward(std::size_t rows, std::size_t width, std::size_t m);

inline double with_backward(double forward) { return 3.0 * forward; }

}  // namespace deft::nn::flops
