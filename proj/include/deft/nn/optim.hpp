// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "deft/nn/params.hpp"

namespace deft::nn {

// p <- p - lr * g for every trainable parameter that has a gradient entry.
// Gradients for frozen or unknown parameters are a usage error.
void sgd_step(ParameterStore& params, const GradMap& grads, double learning_rate);

// Adam, used only to pre-train the toy base model.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& params, const GradMap& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace deft::nn
