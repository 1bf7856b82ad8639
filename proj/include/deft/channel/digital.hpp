// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include <nlohmann/json.hpp>

#include "deft/nn/tensor.hpp"

namespace deft::channel {

// Shannon rate B * log2(1 + SNR) in bit/s.
double capacity(double snr_db, double bandwidth_hz);

double db_to_linear(double db);

struct DigitalLinkConfig {
  double snr_db = 10.0;
  double bandwidth_hz = 2.0e7;
  std::size_t bits_per_coeff = 8;
  std::size_t n_sharing_users = 1;  // FDMA: each user gets bandwidth / n
  // Deliver payloads bit-exactly while still charging bits_per_coeff per
  // coefficient. Used where a protocol needs exact arithmetic identities.
  bool lossless = false;

  void validate() const;
  double rate() const { return capacity(snr_db, bandwidth_hz / static_cast<double>(n_sharing_users)); }
};

// Symmetric uniform quantizer over [-max|x|, max|x|] with 2^bits levels.
// The scale travels with the payload at no cost.
nn::Tensor quantize_roundtrip(const nn::Tensor& payload, std::size_t bits);

double digital_latency(std::size_t n_coeffs, const DigitalLinkConfig& link);

struct Transmission {
  nn::Tensor received;
  double seconds = 0.0;
};

Transmission digital_transmit(const nn::Tensor& payload, const DigitalLinkConfig& link);

void to_json(nlohmann::json& j, const DigitalLinkConfig& c);
void from_json(const nlohmann::json& j, DigitalLinkConfig& c);

}  // namespace deft::channel
