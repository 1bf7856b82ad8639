// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/nn/flops.hpp"

namespace deft::nn::flops {

double block_forward(const TransformerConfig& cfg, std::size_t rows, std::size_t group_len,
                     std::size_t prefix_len) {
  const double n = static_cast<double>(rows), d = static_cast<double>(cfg.d_model);
  const double keys = static_cast<double>(group_len + prefix_len);
  const double projections = 2.0 * n * d * d * 4.0;
  const double scores_and_mix = 2.0 * 2.0 * n * keys * d;
  const double ffn = 2.0 * 2.0 * n * d * static_cast<double>(cfg.d_ff);
  return projections + scores_and_mix + ffn;
}

double head_forward(const TransformerConfig& cfg, std::size_t rows) {
  return 2.0 * static_cast<double>(rows) * static_cast<double>(cfg.d_model) *
         static_cast<double>(cfg.vocab_size);
}

double bilstm_forward(std::size_t prompt_len, std::size_t width) {
  const double l = static_cast<double>(prompt_len), d = static_cast<double>(width);
  const double cells = 2.0 * l * 2.0 * (2.0 * d * 4.0 * d);
  const double mlp = 2.0 * l * (2.0 * d * d + d * d);
  return cells + mlp;
}

double adapter_forward(std::size_t rows, std::size_t width, std::size_t m) {
  return 2.0 * 2.0 * static_cast<double>(rows) * static_cast<double>(width) * static_cast<double>(m);
}

}  // namespace deft::nn::flops
