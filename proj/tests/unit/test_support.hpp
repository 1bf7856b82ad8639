// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "deft/nn/params.hpp"
#include "deft/nn/tape.hpp"

namespace deft::testing {

struct GradMismatch {
  std::string name;
  std::size_t index;
  double analytic;
  double numeric;
};

// Relative error with a 1e-6 floor on the denominator: below that the
// central difference itself is dominated by rounding.
inline double grad_rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// Compares every entry of every trainable parameter in `stores` against
// central differences of `loss` (step `h`). `loss` must rebuild the graph
// from the stores' current values on the given tape.
inline std::vector<GradMismatch> check_gradients(std::vector<nn::ParameterStore*> stores,
                                                 const std::function<nn::Var(nn::Tape&)>& loss,
                                                 double h = 1e-5, double tol = 1e-4,
                                                 std::size_t* checked = nullptr) {
  nn::Tape tape;
  const nn::GradMap grads = tape.backward(loss(tape));
  auto value = [&] {
    nn::Tape t;
    return loss(t).value().item();
  };
  std::vector<GradMismatch> bad;
  std::size_t count = 0;
  for (nn::ParameterStore* store : stores) {
    for (nn::Parameter& p : store->items()) {
      if (!p.trainable) continue;
      auto it = grads.find(p.name);
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double saved = p.value[i];
        p.value[i] = saved + h;
        const double up = value();
        p.value[i] = saved - h;
        const double down = value();
        p.value[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = it == grads.end() ? 0.0 : it->second[i];
        ++count;
        if (grad_rel_error(analytic, numeric) >= tol) bad.push_back({p.name, i, analytic, numeric});
      }
    }
  }
  if (checked) *checked = count;
  return bad;
}

}  // namespace deft::testing
