// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "deft/channel/digital.hpp"
#include "deft/nn/rng.hpp"
#include "deft/nn/tensor.hpp"

namespace deft::channel {

struct AirCompConfig {
  double snr_db = 20.0;
  std::size_t n_tx = 4;
  std::size_t n_rx = 4;
  double symbol_rate_hz = 2.0e7;  // one real coefficient per symbol
  bool noiseless = false;

  void validate() const;
  // Receive noise variance per antenna; transmit power is normalised to 1.
  double noise_variance() const;
  double latency(std::size_t n_symbols) const { return static_cast<double>(n_symbols) / symbol_rate_hz; }
};

// Real n_rx x n_tx channel matrix.
class MimoChannel {
 public:
  static constexpr double kMinSingularValue = 1e-6;

  // i.i.d. N(0, 1) entries, redrawn until full row rank.
  static MimoChannel draw(std::size_t n_rx, std::size_t n_tx, nn::Rng& rng);
  explicit MimoChannel(nn::Tensor h) : h_(std::move(h)) {}

  const nn::Tensor& matrix() const { return h_; }
  std::size_t n_rx() const { return h_.rows(); }
  std::size_t n_tx() const { return h_.cols(); }
  double min_singular_value() const;

 private:
  nn::Tensor h_;
};

struct PrecoderEqualizer {
  nn::Tensor precoder;   // [n_tx, n]
  nn::Tensor equalizer;  // [m, n_rx]
  double power_scale = 1.0;
};

// P = eta * pinv(H) * [W; 0], G = (1/eta) * [I_m | 0], with eta chosen so
// that ||P||_F^2 = n: unit mean transmit power per symbol for unit-variance
// inputs.
PrecoderEqualizer design_precoder_equalizer(const MimoChannel& h, const nn::Tensor& w);

// Over-the-air W x. Targets with more rows than receive antennas are tiled
// into row panels sent one after another.
Transmission aircomp_matvec(const nn::Tensor& w, const nn::Tensor& x, const MimoChannel& h,
                            const AirCompConfig& config, nn::Rng& rng);

// Superposed sum of K equally shaped payloads plus receiver noise. All
// senders share one power scale set by the largest mean payload power, so the
// noise variance is that power divided by the SNR. The latency does not
// depend on K.
Transmission aircomp_aggregate(std::span<const nn::Tensor> payloads, const AirCompConfig& config, nn::Rng& rng);

enum class Activation { Relu, Sigmoid };

double activate(Activation a, double x);

struct PwlSegment {
  double lo = 0.0, hi = 0.0;
  double slope = 0.0, intercept = 0.0;
};

struct PwlApprox {
  Activation activation = Activation::Relu;
  std::vector<PwlSegment> segments;
  double max_error = 0.0;  // over a 64-point-per-segment grid of the domain

  // Linear extrapolation beyond the domain.
  double operator()(double x) const;
};

// Interpolant on n_segments uniform knots over [lo, hi].
PwlApprox pwl_approx(Activation activation, std::size_t n_segments, double lo, double hi);

enum class OverAirMode { PwlSegments, ReceiverDetector };

// Activation applied to an over-the-air pre-activation. PwlSegments uses the
// interpolant; ReceiverDetector applies the exact activation at the receiver
// (no calibration against noise statistics).
nn::Tensor apply_over_air(const nn::Tensor& preact, Activation activation, OverAirMode mode,
                          std::size_t n_segments = 16, double lo = -6.0, double hi = 6.0);

void to_json(nlohmann::json& j, const AirCompConfig& c);
void from_json(const nlohmann::json& j, AirCompConfig& c);

}  // namespace deft::channel
