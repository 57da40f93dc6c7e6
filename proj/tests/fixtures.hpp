#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wonham/model.hpp"

namespace fixtures {

// Frozen oracle values. Each was computed outside the library from the
// linear ODE -w' = Q w + f, w(T) = 0 with Q = [[-1, 1], [1, -1]], f = (1, 0)
// (augmented matrix exponential, scipy.linalg.expm) and agrees with the closed
// form w_1(s) = s/2 + (1 - e^{-2s})/4, w_2(s) = s/2 - (1 - e^{-2s})/4, s = T - t.
inline constexpr double kOccupancyW1 = 0.7161661791908468;  // w_1 at s = 1
inline constexpr double kOccupancyW2 = 0.2838338208091532;  // w_2 at s = 1
inline constexpr double kHalfW1 = 0.4080301397071394;       // w_1 at s = 0.5
inline constexpr double kHalfW2 = 0.0919698602928606;       // w_2 at s = 0.5
// exp(Q^T) (0.3, 0.7): the h = 0 filter at t = 1.
inline constexpr double kFilterH0First = 0.47293294335267746;
inline constexpr double kFilterH0Second = 0.52706705664732254;

inline double occupancy_w1(double s) { return 0.5 * s + 0.25 * (1.0 - std::exp(-2.0 * s)); }
inline double occupancy_w2(double s) { return 0.5 * s - 0.25 * (1.0 - std::exp(-2.0 * s)); }

/// Two-state chain with symmetric rate lambda, one control "a".
inline wonham::ModelSpec two_state(double lambda, double h1, double h2, double f1, double f2,
                                   double g1, double g2, double horizon) {
  auto s = wonham::ModelSpec::zeros(2, 1, {"a"});
  s.set_rate(0, 0, 1, lambda);
  s.set_rate(0, 1, 0, lambda);
  s.set_obs(0, 0, 0, h1);
  s.set_obs(1, 0, 0, h2);
  s.set_reward(0, 0, f1);
  s.set_reward(1, 0, f2);
  s.terminal = {g1, g2};
  s.horizon = horizon;
  return s;
}

/// The linear-value model: Q symmetric with rate 1, h = 0, f = (1, 0), g = 0, T = 1.
inline wonham::ControlModel linear_value_model() {
  return wonham::validate_model(two_state(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0));
}

/// Rate-controlled model: q(a, i, j) = a for i != j, h = (h1, h2), f = -a^2 / 2,
/// with controls a = R k / (m - 1), k = 0..m-1.
inline wonham::ModelSpec rate_control(double R, std::size_t m, double h1, double h2, double g1,
                                      double g2, double horizon) {
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < m; ++k) labels.push_back("a" + std::to_string(k));
  auto s = wonham::ModelSpec::zeros(2, 1, labels);
  for (std::size_t k = 0; k < m; ++k) {
    const double a = R * static_cast<double>(k) / static_cast<double>(m - 1);
    s.set_rate(k, 0, 1, a);
    s.set_rate(k, 1, 0, a);
    s.set_obs(0, k, 0, h1);
    s.set_obs(1, k, 0, h2);
    s.set_reward(0, k, -0.5 * a * a);
    s.set_reward(1, k, -0.5 * a * a);
  }
  s.terminal = {g1, g2};
  s.horizon = horizon;
  return s;
}

inline double control_value(std::size_t k, double R, std::size_t m) {
  return R * static_cast<double>(k) / static_cast<double>(m - 1);
}

}  // namespace fixtures
