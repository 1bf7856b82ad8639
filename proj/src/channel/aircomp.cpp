// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "deft/channel/aircomp.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <fmt/format.h>

#include "deft/error.hpp"

namespace deft::channel {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd to_eigen(const nn::Tensor& t) {
  MatrixXd m(static_cast<Index>(t.rows()), static_cast<Index>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = t.at(i, j);
  return m;
}

nn::Tensor from_eigen(const MatrixXd& m) {
  nn::Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) t.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
  return t;
}

double smallest_singular_value(const MatrixXd& h) {
  if (h.rows() > h.cols()) return 0.0;  // cannot have full row rank
  Eigen::JacobiSVD<MatrixXd> svd(h);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

struct Design {
  MatrixXd precoder, equalizer;
  double eta = 1.0;
};

Design design(const MatrixXd& h, const MatrixXd& w) {
  const Index n_rx = h.rows(), m = w.rows(), n = w.cols();
  if (m > n_rx) {
    throw DimensionError(fmt::format("target has {} rows but the receiver only {} antennas", m, n_rx));
  }
  if (smallest_singular_value(h) < MimoChannel::kMinSingularValue) {
    throw ChannelError("channel matrix does not have full row rank");
  }
  MatrixXd padded = MatrixXd::Zero(n_rx, n);
  padded.topRows(m) = w;
  // Full row rank: pinv(H) = H^T (H H^T)^{-1}.
  const MatrixXd pinv = h.transpose() * (h * h.transpose()).ldlt().solve(MatrixXd::Identity(n_rx, n_rx));
  const MatrixXd raw = pinv * padded;
  const double energy = raw.squaredNorm();
  Design d;
  d.eta = energy > 0.0 ? std::sqrt(static_cast<double>(n) / energy) : 1.0;
  d.precoder = d.eta * raw;
  d.equalizer = MatrixXd::Zero(m, n_rx);
  d.equalizer.leftCols(m) = MatrixXd::Identity(m, m) / d.eta;
  return d;
}

void check_antennas(const MimoChannel& h, const AirCompConfig& config) {
  if (h.n_rx() != config.n_rx || h.n_tx() != config.n_tx) {
    throw DimensionError(fmt::format("channel is {}x{} but the link is configured for {}x{}", h.n_rx(), h.n_tx(),
                                     config.n_rx, config.n_tx));
  }
}

}  // namespace

void AirCompConfig::validate() const {
  if (n_rx < 1 || n_tx < n_rx) throw ConfigError("AirComp needs n_tx >= n_rx >= 1");
  if (!(symbol_rate_hz > 0.0)) throw ConfigError("symbol rate must be positive");
  if (!noiseless && !std::isfinite(snr_db)) throw ConfigError("AirComp SNR must be finite");
}

double AirCompConfig::noise_variance() const { return noiseless ? 0.0 : 1.0 / db_to_linear(snr_db); }

MimoChannel MimoChannel::draw(std::size_t n_rx, std::size_t n_tx, nn::Rng& rng) {
  if (n_rx < 1 || n_tx < n_rx) throw InputError("a full-row-rank channel needs n_tx >= n_rx >= 1");
  for (;;) {
    MimoChannel h(rng.normal_tensor({n_rx, n_tx}, 1.0));
    if (h.min_singular_value() >= kMinSingularValue) return h;
  }
}

double MimoChannel::min_singular_value() const { return smallest_singular_value(to_eigen(h_)); }

PrecoderEqualizer design_precoder_equalizer(const MimoChannel& h, const nn::Tensor& w) {
  if (w.rank() != 2) throw ShapeError("target must be a matrix");
  const Design d = design(to_eigen(h.matrix()), to_eigen(w));
  return {from_eigen(d.precoder), from_eigen(d.equalizer), d.eta};
}

Transmission aircomp_matvec(const nn::Tensor& w, const nn::Tensor& x, const MimoChannel& h,
                            const AirCompConfig& config, nn::Rng& rng) {
  config.validate();
  check_antennas(h, config);
  if (w.rank() != 2 || x.size() != w.cols()) {
    throw ShapeError(fmt::format("cannot multiply {} by a vector of {}", nn::shape_string(w.shape()), x.size()));
  }
  const MatrixXd hm = to_eigen(h.matrix()), wm = to_eigen(w);
  const VectorXd xv = Eigen::Map<const VectorXd>(x.values().data(), static_cast<Index>(x.size()));
  const double sigma = std::sqrt(config.noise_variance());
  const Index panel_rows = static_cast<Index>(config.n_rx);
  Transmission t;
  t.received = nn::Tensor({w.rows()});
  for (Index top = 0; top < wm.rows(); top += panel_rows) {
    const Index rows = std::min(panel_rows, wm.rows() - top);
    const Design d = design(hm, wm.middleRows(top, rows));
    VectorXd received = hm * (d.precoder * xv);
    if (sigma > 0.0)
      for (Index i = 0; i < received.size(); ++i) received(i) += sigma * rng.normal();
    const VectorXd y = d.equalizer * received;
    for (Index i = 0; i < rows; ++i) t.received[static_cast<std::size_t>(top + i)] = y(i);
    t.seconds += config.latency(x.size());
  }
  return t;
}

Transmission aircomp_aggregate(std::span<const nn::Tensor> payloads, const AirCompConfig& config, nn::Rng& rng) {
  config.validate();
  if (payloads.empty()) throw InputError("nothing to aggregate");
  Transmission t;
  t.received = nn::Tensor(payloads.front().shape());
  for (const auto& p : payloads) {
    if (p.shape() != t.received.shape()) throw InputError("aggregated payloads must share one shape");
    for (std::size_t i = 0; i < p.size(); ++i) t.received[i] += p[i];
  }
  // Common power scaling: the loudest sender transmits at unit mean power and
  // the receiver undoes the scale, so the noise follows the payload power.
  double power = 0.0;
  for (const auto& p : payloads) {
    double s = 0.0;
    for (double v : p.values()) s += v * v;
    power = std::max(power, s / static_cast<double>(p.size()));
  }
  const double sigma = std::sqrt(config.noise_variance() * power);
  if (sigma > 0.0)
    for (double& v : t.received.data()) v += sigma * rng.normal();
  t.seconds = config.latency(t.received.size());
  return t;
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

double PwlApprox::operator()(double x) const {
  const double lo = segments.front().lo, width = segments.front().hi - lo;
  const double pos = std::floor((x - lo) / width);
  const auto k = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(segments.size() - 1)));
  return segments[k].slope * x + segments[k].intercept;
}

PwlApprox pwl_approx(Activation activation, std::size_t n_segments, double lo, double hi) {
  if (n_segments < 2) throw InputError("piecewise-linear approximation needs at least 2 segments");
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) throw InputError("domain must be a bounded interval");
  PwlApprox out;
  out.activation = activation;
  const double width = (hi - lo) / static_cast<double>(n_segments);
  for (std::size_t i = 0; i < n_segments; ++i) {
    const double a = lo + width * static_cast<double>(i);
    const double b = i + 1 == n_segments ? hi : lo + width * static_cast<double>(i + 1);
    const double fa = activate(activation, a), fb = activate(activation, b);
    const double slope = (fb - fa) / (b - a);
    out.segments.push_back({a, b, slope, fa - slope * a});
  }
  constexpr std::size_t kGrid = 64;
  for (std::size_t g = 0; g <= kGrid * n_segments; ++g) {
    const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(kGrid * n_segments);
    out.max_error = std::max(out.max_error, std::abs(out(x) - activate(activation, x)));
  }
  return out;
}

nn::Tensor apply_over_air(const nn::Tensor& preact, Activation activation, OverAirMode mode, std::size_t n_segments,
                          double lo, double hi) {
  nn::Tensor out = preact;
  if (mode == OverAirMode::ReceiverDetector) {
    for (double& v : out.data()) v = activate(activation, v);
    return out;
  }
  const PwlApprox pwl = pwl_approx(activation, n_segments, lo, hi);
  for (double& v : out.data()) v = pwl(v);
  return out;
}

void to_json(nlohmann::json& j, const AirCompConfig& c) {
  j = {{"snr_db", c.snr_db},
       {"n_tx", c.n_tx},
       {"n_rx", c.n_rx},
       {"symbol_rate_hz", c.symbol_rate_hz},
       {"noiseless", c.noiseless}};
}

void from_json(const nlohmann::json& j, AirCompConfig& c) {
  c = AirCompConfig{};
  if (j.contains("snr_db")) j.at("snr_db").get_to(c.snr_db);
  if (j.contains("n_tx")) j.at("n_tx").get_to(c.n_tx);
  if (j.contains("n_rx")) j.at("n_rx").get_to(c.n_rx);
  if (j.contains("symbol_rate_hz")) j.at("symbol_rate_hz").get_to(c.symbol_rate_hz);
  if (j.contains("noiseless")) j.at("noiseless").get_to(c.noiseless);
}

}  // namespace deft::channel
