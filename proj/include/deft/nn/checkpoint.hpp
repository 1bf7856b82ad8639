// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "deft/nn/params.hpp"

namespace deft::nn {

// Binary parameter container, all integers and floats little-endian:
//
//   "DEFT"                magic, 4 bytes
//   u32 version           currently 1
//   u32 tensor_count
//   per tensor:
//     u32 name_len, name bytes (UTF-8, no terminator)
//     u32 rank, rank x u64 dims
//     product(dims) x f64 values, row-major
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const NamedTensors& tensors);
NamedTensors read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params);
NamedTensors load_checkpoint(const std::filesystem::path& path);

}  // namespace deft::nn
