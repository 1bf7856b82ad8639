// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/nn/optim.hpp"

#include <cmath>

#include <fmt/format.h>

#include "deft/error.hpp"

namespace deft::nn {

namespace {

Parameter& checked(ParameterStore& params, const std::string& name, const Tensor& g) {
  if (!params.contains(name)) throw UsageError(fmt::format("gradient for unknown parameter '{}'", name));
  Parameter& p = params.get(name);
  if (!p.trainable) throw UsageError(fmt::format("gradient for frozen parameter '{}'", name));
  if (p.value.shape() != g.shape()) {
    throw UsageError(fmt::format("gradient shape {} does not match parameter '{}' {}",
                                 shape_string(g.shape()), name, shape_string(p.value.shape())));
  }
  return p;
}

}  // namespace

void sgd_step(ParameterStore& params, const GradMap& grads, double learning_rate) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) continue;  // gradients of non-parameter leaves
    Parameter& p = checked(params, name, g);
    for (std::size_t i = 0; i < g.size(); ++i) p.value[i] -= learning_rate * g[i];
  }
}

void Adam::step(ParameterStore& params, const GradMap& grads) {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) continue;
    Parameter& p = checked(params, name, g);
    Tensor& m = m_.try_emplace(name, Tensor(g.shape())).first->second;
    Tensor& v = v_.try_emplace(name, Tensor(g.shape())).first->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace deft::nn
