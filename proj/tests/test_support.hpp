#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "swipeauth/touch.hpp"

namespace swipeauth::testing {

/// Random but valid swipe in pixel units on a 1080x1920 screen.
inline TouchSequence random_swipe(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TouchSequence s;
  s.user_id = "u";
  s.session_id = "s";
  s.device_id = "d";
  s.screen_width = 1080;
  s.screen_height = 1920;
  double t = 1000.0 * u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    t += 4.0 + 12.0 * u(rng);
    s.samples.push_back({1080.0 * u(rng), 1920.0 * u(rng), u(rng), t});
  }
  return s;
}

/// Independent O(n^2) DFT magnitude via std::polar.
inline std::vector<double> naive_dft_magnitude(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) * static_cast<double>(k) /
                           static_cast<double>(n);
      acc += v[j] * std::polar(1.0, angle);
    }
    out[k] = std::abs(acc);
  }
  return out;
}

}  // namespace swipeauth::testing
