// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/peft/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <Eigen/SVD>
#include <fmt/format.h>

#include "deft/error.hpp"

namespace deft::peft {

ImportanceReport importance_svd(const std::vector<nn::Tensor>& deltas) {
  ImportanceReport r;
  r.method = ImportanceMethod::SingularValueMass;
  for (const auto& d : deltas) {
    Eigen::MatrixXd m(d.rows(), d.cols());
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d.at(i, j);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    r.scores.push_back(svd.singularValues().sum());
  }
  return r;
}

ImportanceReport importance_grad_weight(const nn::ParameterStore& params, const nn::GradMap& grads,
                                        std::size_t n_blocks) {
  ImportanceReport r;
  r.method = ImportanceMethod::GradWeightProduct;
  r.scores.assign(n_blocks, 0.0);
  for (const auto& [name, g] : grads) {
    const nn::Parameter* p = params.find(name);
    if (!p) throw UsageError(fmt::format("gradient for unknown parameter '{}'", name));
    if (p->value.shape() != g.shape()) {
      throw UsageError(fmt::format("gradient shape {} does not match '{}' {}", nn::shape_string(g.shape()), name,
                                   nn::shape_string(p->value.shape())));
    }
    if (p->block < 0) continue;
    if (static_cast<std::size_t>(p->block) >= n_blocks) {
      throw UsageError(fmt::format("parameter '{}' belongs to block {} of {}", name, p->block, n_blocks));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += std::abs(p->value[i] * g[i]);
    r.scores[static_cast<std::size_t>(p->block)] += s;
  }
  return r;
}

namespace {

constexpr double kTieTolerance = 1e-9;

// Largest remainder over `active` blocks.
void apportion(const std::vector<double>& scores, const std::vector<std::size_t>& active, std::size_t budget,
               std::vector<std::size_t>& sizes) {
  double total = 0.0;
  for (std::size_t b : active) total += scores[b];
  std::vector<double> quota(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) {
    double q = total > 0.0 ? static_cast<double>(budget) * (scores[active[i]] / total)
                           : static_cast<double>(budget) / static_cast<double>(active.size());
    // Snap values that only miss an integer by rounding, so that rescaled
    // scores apportion identically.
    const double r = std::round(q);
    if (std::abs(q - r) <= kTieTolerance * std::max(1.0, q)) q = r;
    quota[i] = q;
  }
  std::size_t given = 0;
  std::vector<double> rem(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) {
    const double f = std::floor(quota[i]);
    sizes[active[i]] = static_cast<std::size_t>(f);
    given += static_cast<std::size_t>(f);
    rem[i] = quota[i] - f;
  }
  std::vector<std::size_t> order(active.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (std::abs(rem[a] - rem[b]) <= kTieTolerance * std::max({1.0, quota[a], quota[b]})) return false;
    return rem[a] > rem[b];
  });
  for (std::size_t j = 0; given < budget; ++j, ++given) sizes[active[order[j]]] += 1;
}

}  // namespace

RankAllocation allocate_budget(const ImportanceReport& report, std::size_t budget, const std::vector<std::size_t>& caps) {
  const std::size_t n = report.scores.size();
  if (n == 0) throw InputError("allocation over zero blocks");
  if (!caps.empty() && caps.size() != n) throw InputError("one cap per block is required");
  for (double s : report.scores)
    if (!(s >= 0.0) || !std::isfinite(s)) throw InputError("importance scores must be finite and >= 0");
  auto cap = [&](std::size_t b) { return caps.empty() ? kNoCap : caps[b]; };
  std::size_t cap_sum = 0;
  for (std::size_t b = 0; b < n; ++b) cap_sum = cap(b) == kNoCap || cap_sum == kNoCap ? kNoCap : cap_sum + cap(b);
  if (cap_sum != kNoCap && budget > cap_sum) {
    throw InfeasibleError(fmt::format("budget {} exceeds the sum of caps {}", budget, cap_sum));
  }
  RankAllocation out;
  out.budget = budget;
  out.sizes.assign(n, 0);
  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), std::size_t{0});
  std::size_t left = budget;
  while (true) {
    apportion(report.scores, active, left, out.sizes);
    std::vector<std::size_t> next;
    bool pinned = false;
    for (std::size_t b : active) {
      if (out.sizes[b] > cap(b)) {
        out.sizes[b] = cap(b);
        left -= cap(b);
        pinned = true;
      } else {
        next.push_back(b);
      }
    }
    if (!pinned) break;
    // Re-apportion from scratch among the blocks that were not pinned.
    active = std::move(next);
    if (active.empty()) break;
  }
  return out;
}

void write_allocation_csv(std::ostream& out, const ImportanceReport& report, const RankAllocation& alloc) {
  out << "block,score,allocated_size\n";
  for (std::size_t b = 0; b < alloc.sizes.size(); ++b) {
    out << fmt::format("{},{:.17g},{}\n", b, report.scores.at(b), alloc.sizes[b]);
  }
}

}  // namespace deft::peft
