#pragma once

// Touch-sequence types and the 11-channel fixed-length feature matrix.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "swipeauth/error.hpp"

namespace swipeauth {

struct RawTouchSample {
  double x = 0.0;
  double y = 0.0;
  double p = 0.0;  // pressure in [0,1]
  double t = 0.0;  // milliseconds

  bool operator==(const RawTouchSample&) const = default;
};

struct TouchSequence {
  std::vector<RawTouchSample> samples;
  std::string user_id;
  std::string session_id;
  std::string device_id;
  double screen_width = 1.0;
  double screen_height = 1.0;
  // false when the device reports no pressure; every p is then 0
  bool pressure_available = true;
  // capture task the swipe came from; only right swipes are used for authentication
  std::string task = "drag_drop_right";

  std::size_t size() const { return samples.size(); }
  bool operator==(const TouchSequence&) const = default;
};

inline constexpr std::size_t kMinSequenceLength = 5;
inline constexpr int kFeatureChannels = 11;
inline constexpr int kFeatureSteps = 100;

/// Channel rows of a FeatureMatrix, in storage order.
enum Channel : int {
  kChX = 0,
  kChY,
  kChP,
  kChVx,
  kChVy,
  kChAx,
  kChAy,
  kChJx,
  kChJy,
  kChSpecX,
  kChSpecY,
};

struct FeatureMatrix {
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(kFeatureChannels, kFeatureSteps);
  int valid_length = 0;
};

struct Derivatives {
  std::vector<double> vx, vy, ax, ay, jx, jy;
};

/// Throws if the sequence breaks any TouchSequence / RawTouchSample invariant.
inline void validate_sequence(const TouchSequence& seq) {
  if (!(seq.screen_width > 0.0) || !(seq.screen_height > 0.0) || !std::isfinite(seq.screen_width) ||
      !std::isfinite(seq.screen_height)) {
    throw Error(ErrorKind::InvalidMetadata, "screen dimensions must be positive");
  }
  if (seq.samples.size() < kMinSequenceLength) {
    throw Error(ErrorKind::SequenceTooShort, "sequence has " + std::to_string(seq.samples.size()) +
                                                 " samples, need at least " +
                                                 std::to_string(kMinSequenceLength));
  }
  for (std::size_t i = 0; i < seq.samples.size(); ++i) {
    const auto& s = seq.samples[i];
    if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.p) || !std::isfinite(s.t)) {
      throw Error(ErrorKind::MalformedSequence, "non-finite value at sample " + std::to_string(i));
    }
    if (s.p < 0.0 || s.p > 1.0) {
      throw Error(ErrorKind::MalformedSequence, "pressure outside [0,1] at sample " + std::to_string(i));
    }
    if (s.t < 0.0) {
      throw Error(ErrorKind::MalformedSequence, "negative timestamp at sample " + std::to_string(i));
    }
    if (i > 0 && !(s.t > seq.samples[i - 1].t)) {
      throw Error(ErrorKind::MalformedSequence,
                  "timestamps not strictly increasing at sample " + std::to_string(i));
    }
  }
}

inline bool is_valid_sequence(const TouchSequence& seq) {
  try {
    validate_sequence(seq);
    return true;
  } catch (const Error&) {
    return false;
  }
}

/// Scales coordinates to screen units; the result reports a 1x1 screen.
inline TouchSequence normalize_sequence(const TouchSequence& seq) {
  if (!(seq.screen_width > 0.0) || !(seq.screen_height > 0.0)) {
    throw Error(ErrorKind::InvalidMetadata, "screen dimensions must be positive");
  }
  TouchSequence out = seq;
  if (seq.screen_width == 1.0 && seq.screen_height == 1.0) return out;
  for (auto& s : out.samples) {
    s.x /= seq.screen_width;
    s.y /= seq.screen_height;
  }
  out.screen_width = 1.0;
  out.screen_height = 1.0;
  return out;
}

/// First derivative of `f` over the (possibly non-uniform) grid `t`.
/// Three-point second-order differences: centred in the interior, one-sided at
/// both ends. Exact for quadratics on any grid.
inline std::vector<double> time_derivative(std::span<const double> f, std::span<const double> t) {
  const std::size_t n = f.size();
  if (n != t.size()) throw Error(ErrorKind::Contract, "derivative: value/time length mismatch");
  if (n < 3) throw Error(ErrorKind::SequenceTooShort, "derivative needs at least 3 samples");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(t[i] > t[i - 1])) {
      throw Error(ErrorKind::MalformedSequence, "repeated or decreasing timestamp at sample " + std::to_string(i));
    }
  }
  // written on differences so a constant channel yields exact zeros
  std::vector<double> d(n);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double hd = t[i] - t[i - 1];
    const double hs = t[i + 1] - t[i];
    d[i] = (hd * hd * (f[i + 1] - f[i]) + hs * hs * (f[i] - f[i - 1])) / (hs * hd * (hd + hs));
  }
  {
    const double h1 = t[1] - t[0];
    const double h2 = t[2] - t[1];
    const double b = (h1 + h2) / (h1 * h2);
    const double c = -h1 / (h2 * (h1 + h2));
    d[0] = b * (f[1] - f[0]) + c * (f[2] - f[0]);
  }
  {
    const double h1 = t[n - 2] - t[n - 3];
    const double h2 = t[n - 1] - t[n - 2];
    const double a = h2 / (h1 * (h1 + h2));
    const double b = -(h2 + h1) / (h1 * h2);
    d[n - 1] = a * (f[n - 3] - f[n - 1]) + b * (f[n - 2] - f[n - 1]);
  }
  return d;
}

/// Velocity, acceleration and jerk of both axes over real timestamps.
/// The timestamp itself is consumed here and never becomes a feature.
inline Derivatives derivatives(const TouchSequence& seq) {
  const std::size_t n = seq.samples.size();
  if (n < 3) throw Error(ErrorKind::SequenceTooShort, "derivatives need at least 3 samples");
  std::vector<double> x(n), y(n), t(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = seq.samples[i].x;
    y[i] = seq.samples[i].y;
    t[i] = seq.samples[i].t;
  }
  Derivatives d;
  d.vx = time_derivative(x, t);
  d.vy = time_derivative(y, t);
  d.ax = time_derivative(d.vx, t);
  d.ay = time_derivative(d.vy, t);
  d.jx = time_derivative(d.ax, t);
  d.jy = time_derivative(d.ay, t);
  return d;
}

/// |DFT| of a real channel (unnormalized), one bin per input sample.
inline std::vector<double> spectrum(std::span<const double> channel) {
  const std::size_t n = channel.size();
  if (n == 0) throw Error(ErrorKind::Contract, "spectrum of empty channel");
  for (double v : channel) {
    if (!std::isfinite(v)) throw Error(ErrorKind::MalformedSequence, "spectrum: non-finite input");
  }
  // twiddle table indexed by (j*k) mod n keeps the phase exact for every bin
  std::vector<double> cos_tab(n), sin_tab(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
    cos_tab[m] = std::cos(angle);
    sin_tab[m] = std::sin(angle);
  }
  std::vector<double> mag(n);
  for (std::size_t k = 0; k < n; ++k) {
    double re = 0.0;
    double im = 0.0;
    std::size_t idx = 0;
    for (std::size_t j = 0; j < n; ++j) {
      re += channel[j] * cos_tab[idx];
      im -= channel[j] * sin_tab[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    mag[k] = std::hypot(re, im);
  }
  return mag;
}

/// Computes all 11 channels at the true sequence length, then zero-pads or
/// truncates each to kFeatureSteps columns.
inline FeatureMatrix build_feature_matrix(const TouchSequence& seq) {
  validate_sequence(seq);
  const std::size_t n = seq.samples.size();
  const Derivatives d = derivatives(seq);
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = seq.samples[i].x;
    y[i] = seq.samples[i].y;
  }
  const auto spec_x = spectrum(x);
  const auto spec_y = spectrum(y);

  FeatureMatrix fm;
  fm.valid_length = static_cast<int>(std::min<std::size_t>(n, kFeatureSteps));
  for (int col = 0; col < fm.valid_length; ++col) {
    const auto i = static_cast<std::size_t>(col);
    fm.values(kChX, col) = x[i];
    fm.values(kChY, col) = y[i];
    fm.values(kChP, col) = seq.samples[i].p;
    fm.values(kChVx, col) = d.vx[i];
    fm.values(kChVy, col) = d.vy[i];
    fm.values(kChAx, col) = d.ax[i];
    fm.values(kChAy, col) = d.ay[i];
    fm.values(kChJx, col) = d.jx[i];
    fm.values(kChJy, col) = d.jy[i];
    fm.values(kChSpecX, col) = spec_x[i];
    fm.values(kChSpecY, col) = spec_y[i];
  }
  if (!fm.values.allFinite()) {
    throw Error(ErrorKind::NumericFailure, "feature matrix contains non-finite values");
  }
  return fm;
}

/// normalize_sequence followed by build_feature_matrix.
inline FeatureMatrix featurize(const TouchSequence& raw) {
  return build_feature_matrix(normalize_sequence(raw));
}

}  // namespace swipeauth
