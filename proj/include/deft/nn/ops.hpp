// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "deft/nn/tape.hpp"

// Differentiable operations on Tape variables. Matrices are rank-2; bias and
// gain vectors are rank-1 and broadcast across rows.
namespace deft::nn {

Var matmul(Var a, Var b);
Var transpose(Var a);
// Same values in row-major order under a new shape.
Var reshape(Var a, Shape shape);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// Multiplies every entry of `a` by the single entry of `s`.
Var scale_by(Var s, Var a);
Var add_row(Var a, Var row);

Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);

Var layer_norm(Var x, Var gain, Var offset, double eps = 1e-5);
Var softmax_rows(Var x);

Var embedding(Var table, std::span<const int> tokens);
Var gather_rows(Var x, std::span<const std::size_t> rows);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var slice_cols(Var x, std::size_t begin, std::size_t count);

// x holds groups of `group_len` consecutive rows; the same `prompt` rows are
// placed in front of every group.
Var prepend_to_groups(Var prompt, Var x, std::size_t group_len);

// Multi-head scaled dot-product attention without masking, evaluated
// independently for each group of `group_len` rows. Optional prefix rows are
// extra keys/values shared by every group.
Var attention(Var q, Var k, Var v, std::size_t n_heads, std::size_t group_len,
              std::optional<Var> prefix_k = std::nullopt, std::optional<Var> prefix_v = std::nullopt);

// Mean over rows of -log softmax(logits)[target].
Var cross_entropy(Var logits, std::span<const int> targets);
Var sum(Var x);
Var kron(Var a, Var b);

}  // namespace deft::nn
