// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "deft/nn/tensor.hpp"

namespace deft::nn {

// 64-bit mixing function used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

// Stable (platform independent) hash of a stream name.
std::uint64_t stream_hash(std::string_view name);

// Seeded random stream. The engine is std::mt19937_64, whose output sequence
// is fixed by the standard; the uniform and Gaussian transforms are written
// out here so draws are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // Independent stream derived from (seed, name).
  static Rng stream(std::uint64_t seed, std::string_view name) {
    return Rng(seed ^ stream_hash(name));
  }
  Rng fork(std::string_view name) { return Rng(next_u64() ^ stream_hash(name)); }

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                                   // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n);                   // [0, n)
  double normal();                                    // N(0, 1)
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Tensor normal_tensor(Shape shape, double stddev);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace deft::nn
