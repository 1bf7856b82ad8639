// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/nn/lstm.hpp"

#include <cmath>

#include <fmt/format.h>

#include "deft/error.hpp"
#include "deft/nn/ops.hpp"

namespace deft::nn {

void BiLstmEncoder::init(ParameterStore& store, std::uint64_t seed) const {
  const std::size_t d = width_;
  for (const char* dir : {"fwd", "bwd"}) {
    store.add_normal(name(fmt::format("{}.wx", dir)), {d, 4 * d}, seed, 1.0 / std::sqrt(double(d)));
    store.add_normal(name(fmt::format("{}.wh", dir)), {d, 4 * d}, seed, 1.0 / std::sqrt(double(d)));
    store.add_constant(name(fmt::format("{}.b", dir)), {4 * d}, 0.0, ParamKind::Bias);
  }
  store.add_normal(name("mlp1.w"), {2 * d, d}, seed, 1.0 / std::sqrt(double(2 * d)));
  store.add_constant(name("mlp1.b"), {d}, 0.0, ParamKind::Bias);
  store.add_normal(name("mlp2.w"), {d, d}, seed, 1.0 / std::sqrt(double(d)));
  store.add_constant(name("mlp2.b"), {d}, 0.0, ParamKind::Bias);
}

Var BiLstmEncoder::run_direction(Tape& tape, const ParameterStore& store, Var input,
                                 const std::string& dir, bool reverse) const {
  const std::size_t d = width_, len = input.value().rows();
  Var wx = store.bind(tape, name(dir + ".wx"));
  Var wh = store.bind(tape, name(dir + ".wh"));
  Var b = store.bind(tape, name(dir + ".b"));
  // Input projections for all steps at once.
  Var xw = add_row(matmul(input, wx), b);
  Var h = tape.constant(Tensor({1, d}));
  Var c = tape.constant(Tensor({1, d}));
  std::vector<Var> outputs(len);
  for (std::size_t step = 0; step < len; ++step) {
    const std::size_t t = reverse ? len - 1 - step : step;
    Var gates = add(slice_rows(xw, t, 1), matmul(h, wh));
    Var i = sigmoid(slice_cols(gates, 0, d));
    Var f = sigmoid(slice_cols(gates, d, d));
    Var g = tanh(slice_cols(gates, 2 * d, d));
    Var o = sigmoid(slice_cols(gates, 3 * d, d));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
    outputs[t] = h;
  }
  return concat_rows(outputs);
}

Var BiLstmEncoder::encode(Tape& tape, const ParameterStore& store, Var init_prompt) const {
  if (init_prompt.value().rank() != 2 || init_prompt.value().cols() != width_) {
    throw ShapeError(fmt::format("prompt encoder of width {} got input of shape {}", width_,
                                 shape_string(init_prompt.value().shape())));
  }
  if (init_prompt.value().rows() == 0) throw InputError("prompt length must be >= 1");
  Var fwd = run_direction(tape, store, init_prompt, "fwd", false);
  Var bwd = run_direction(tape, store, init_prompt, "bwd", true);
  Var hcat = concat_cols({fwd, bwd});
  Var m1 = relu(add_row(matmul(hcat, store.bind(tape, name("mlp1.w"))), store.bind(tape, name("mlp1.b"))));
  return add_row(matmul(m1, store.bind(tape, name("mlp2.w"))), store.bind(tape, name("mlp2.b")));
}

}  // namespace deft::nn
