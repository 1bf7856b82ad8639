// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/peft/lowrank.hpp"

#include <cmath>

#include <fmt/format.h>

#include "deft/error.hpp"
#include "deft/nn/ops.hpp"
#include "deft/nn/rng.hpp"

namespace deft::peft {

namespace {

nn::Tensor gaussian(std::uint64_t seed, const std::string& name, nn::Shape shape) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(shape[1]));
  return nn::Rng::stream(seed, name).normal_tensor(std::move(shape), stddev);
}

nn::Tensor kron(const nn::Tensor& a, const nn::Tensor& b) {
  const std::size_t br = b.rows(), bc = b.cols();
  nn::Tensor out({a.rows() * br, a.cols() * bc});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t p = 0; p < br; ++p)
        for (std::size_t q = 0; q < bc; ++q) out.at(i * br + p, j * bc + q) = a.at(i, j) * b.at(p, q);
  return out;
}

}  // namespace

std::vector<std::size_t> kronecker_dims(std::size_t rows, std::size_t cols, std::size_t rank) {
  if (rank == 0 || rows % rank != 0 || cols % rank != 0) {
    throw InputError(fmt::format("Kronecker rank {} must divide both {} and {}", rank, rows, cols));
  }
  return {rank, rank, rows / rank, cols / rank};
}

LowRankFactors build_lowrank(LowRankConstruction construction, std::size_t rows, std::size_t cols,
                             const std::vector<std::size_t>& dims, std::uint64_t seed, InitMode init,
                             std::uint64_t core_seed) {
  LowRankFactors f;
  f.construction = construction;
  f.rows = rows;
  f.cols = cols;
  const bool zero = init == InitMode::ZeroDelta;
  if (construction == LowRankConstruction::Kronecker) {
    if (dims.empty() || dims.size() % 2 != 0) throw InputError("Kronecker dims must be (rows, cols) pairs");
    std::size_t pr = 1, pc = 1;
    for (std::size_t i = 0; i < dims.size(); i += 2) {
      if (dims[i] == 0 || dims[i + 1] == 0) throw InputError("Kronecker component dims must be >= 1");
      pr *= dims[i];
      pc *= dims[i + 1];
    }
    if (pr != rows || pc != cols) {
      throw InputError(fmt::format("Kronecker components give {}x{}, target is {}x{}", pr, pc, rows, cols));
    }
    for (std::size_t i = 0; i < dims.size(); i += 2) {
      nn::Shape shape{dims[i], dims[i + 1]};
      f.tunable.push_back(zero && i == 0 ? nn::Tensor(shape)
                                         : gaussian(core_seed, fmt::format("kron.c{}", i / 2), shape));
    }
    return f;
  }
  if (dims.size() != 1) throw InputError("Plain and Fastfood constructions take a single rank");
  const std::size_t r = dims[0];
  if (r == 0 || r > std::min(rows, cols)) {
    throw InputError(fmt::format("rank {} exceeds min({}, {})", r, rows, cols));
  }
  if (construction == LowRankConstruction::Plain) {
    f.tunable.push_back(zero ? nn::Tensor({rows, r}) : gaussian(core_seed, "plain.u", {rows, r}));
    f.tunable.push_back(gaussian(core_seed, "plain.v", {r, cols}));
  } else {
    f.fixed.push_back(gaussian(seed, "fastfood.l", {rows, r}));
    f.fixed.push_back(gaussian(seed, "fastfood.r", {r, cols}));
    f.tunable.push_back(zero ? nn::Tensor({r, r}) : gaussian(core_seed, "fastfood.z", {r, r}));
  }
  return f;
}

nn::Tensor LowRankFactors::materialize(double alpha) const {
  nn::Tensor d;
  switch (construction) {
    case LowRankConstruction::Plain:
      d = nn::matmul(tunable[0], tunable[1]);
      break;
    case LowRankConstruction::Fastfood:
      d = nn::matmul(nn::matmul(fixed[0], tunable[0]), fixed[1]);
      break;
    case LowRankConstruction::Kronecker:
      d = tunable[0];
      for (std::size_t i = 1; i < tunable.size(); ++i) d = kron(d, tunable[i]);
      break;
  }
  return d * alpha;
}

std::size_t LowRankFactors::tunable_count() const {
  std::size_t n = 0;
  for (const auto& t : tunable) n += t.size();
  return n;
}

nn::Var lowrank_delta(LowRankConstruction construction, const std::vector<nn::Var>& fixed,
                      const std::vector<nn::Var>& tunable, double alpha) {
  nn::Var d;
  switch (construction) {
    case LowRankConstruction::Plain:
      d = nn::matmul(tunable.at(0), tunable.at(1));
      break;
    case LowRankConstruction::Fastfood:
      d = nn::matmul(nn::matmul(fixed.at(0), tunable.at(0)), fixed.at(1));
      break;
    case LowRankConstruction::Kronecker:
      d = tunable.at(0);
      for (std::size_t i = 1; i < tunable.size(); ++i) d = nn::kron(d, tunable[i]);
      break;
  }
  return alpha == 1.0 ? d : nn::scale(d, alpha);
}

}  // namespace deft::peft
