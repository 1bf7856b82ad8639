// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/channel/digital.hpp"

#include <cmath>

#include <fmt/format.h>

#include "deft/error.hpp"

namespace deft::channel {

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double capacity(double snr_db, double bandwidth_hz) {
  if (!(bandwidth_hz > 0.0)) throw InputError(fmt::format("bandwidth must be positive, got {}", bandwidth_hz));
  return bandwidth_hz * std::log2(1.0 + db_to_linear(snr_db));
}

void DigitalLinkConfig::validate() const {
  if (!(bandwidth_hz > 0.0)) throw ConfigError("digital link bandwidth must be positive");
  if (bits_per_coeff < 1 || bits_per_coeff > 52) throw ConfigError("bits_per_coeff must be in [1, 52]");
  if (n_sharing_users < 1) throw ConfigError("n_sharing_users must be >= 1");
  if (!std::isfinite(snr_db)) throw ConfigError("digital link SNR must be finite");
}

nn::Tensor quantize_roundtrip(const nn::Tensor& payload, std::size_t bits) {
  double range = 0.0;
  for (double v : payload.values()) range = std::max(range, std::abs(v));
  nn::Tensor out = payload;
  if (range == 0.0) return out;
  const double top = std::ldexp(1.0, static_cast<int>(bits)) - 1.0;  // highest level index
  const double step = 2.0 * range / top;
  for (double& v : out.data()) {
    const double level = std::min(top, std::max(0.0, std::round((v + range) / step)));
    v = level * step - range;
  }
  return out;
}

double digital_latency(std::size_t n_coeffs, const DigitalLinkConfig& link) {
  link.validate();
  const double bits = static_cast<double>(n_coeffs) * static_cast<double>(link.bits_per_coeff);
  return bits / link.rate();
}

Transmission digital_transmit(const nn::Tensor& payload, const DigitalLinkConfig& link) {
  link.validate();
  if (payload.empty()) throw InputError("cannot transmit an empty payload");
  if (!payload.all_finite()) throw InputError("payload holds non-finite values");
  Transmission t;
  t.received = link.lossless ? payload : quantize_roundtrip(payload, link.bits_per_coeff);
  t.seconds = digital_latency(payload.size(), link);
  return t;
}

void to_json(nlohmann::json& j, const DigitalLinkConfig& c) {
  j = {{"snr_db", c.snr_db},
       {"bandwidth_hz", c.bandwidth_hz},
       {"bits_per_coeff", c.bits_per_coeff},
       {"n_sharing_users", c.n_sharing_users},
       {"lossless", c.lossless}};
}

void from_json(const nlohmann::json& j, DigitalLinkConfig& c) {
  c = DigitalLinkConfig{};
  if (j.contains("snr_db")) j.at("snr_db").get_to(c.snr_db);
  if (j.contains("bandwidth_hz")) j.at("bandwidth_hz").get_to(c.bandwidth_hz);
  if (j.contains("bits_per_coeff")) j.at("bits_per_coeff").get_to(c.bits_per_coeff);
  if (j.contains("n_sharing_users")) j.at("n_sharing_users").get_to(c.n_sharing_users);
  if (j.contains("lossless")) j.at("lossless").get_to(c.lossless);
}

}  // namespace deft::channel
