#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "wonham/error.hpp"

namespace wonham {

/// Uniform step grid t_k = k * dt, k = 0..n_steps.
struct TimeGrid {
  double dt = 0.0;
  std::size_t n_steps = 0;

  double time(std::size_t k) const noexcept { return static_cast<double>(k) * dt; }
  double horizon() const noexcept { return time(n_steps); }
};

/// Builds the grid and insists that dt divides the horizon.
inline TimeGrid make_time_grid(double horizon, double dt) {
  if (!(horizon > 0.0) || !(dt > 0.0))
    throw Error(ErrorKind::invalid_argument, "horizon and dt must be positive");
  const double ratio = horizon / dt;
  const double steps = std::round(ratio);
  if (steps < 1.0 || std::abs(ratio - steps) > 1e-9 * std::max(1.0, ratio))
    throw Error(ErrorKind::grid_mismatch, "dt must divide the horizon");
  return {dt, static_cast<std::size_t>(steps)};
}

/// Piecewise-constant control on a step grid: labels[k] holds on [t_k, t_{k+1})
/// and may depend only on information available at t_k.
struct ControlPath {
  double dt = 0.0;
  std::vector<std::size_t> labels;

  static ControlPath constant(std::size_t label, const TimeGrid& grid) {
    return {grid.dt, std::vector<std::size_t>(grid.n_steps, label)};
  }

  double horizon() const noexcept { return dt * static_cast<double>(labels.size()); }

  /// Control in force at time t (the value of the cell containing t).
  std::size_t at(double t) const {
    if (labels.empty() || t < 0.0)
      throw Error(ErrorKind::control_undefined, "control path does not cover t");
    auto k = static_cast<std::size_t>(std::floor(t / dt));
    if (k >= labels.size()) {
      if (t <= horizon() * (1.0 + 1e-12)) return labels.back();
      throw Error(ErrorKind::control_undefined,
                  "control path ends at " + std::to_string(horizon()) + " before t = " +
                      std::to_string(t));
    }
    return labels[k];
  }

  friend bool operator==(const ControlPath&, const ControlPath&) = default;
};

/// Feedback rule a(t, rho) evaluated on the pre-step filter state.
using FeedbackFn = std::function<std::size_t(double, std::span<const double>)>;

/// Open-loop path or feedback rule.
using ControlSource = std::variant<ControlPath, FeedbackFn>;

struct SeedRecord {
  std::uint64_t master = 0;
  std::uint64_t path = 0;
};

/// Materialized driving randomness: a rate-K marked Poisson stream with
/// uniform marks on S and acceptance uniforms, the initial state, and
/// d-dimensional Brownian increments on the step grid.
struct DrivingNoise {
  std::vector<double> poisson_times;
  std::vector<std::size_t> marks;
  std::vector<double> uniforms;
  std::size_t initial_state = 0;
  TimeGrid grid;
  std::size_t d_obs = 0;
  std::vector<double> brownian;  ///< n_steps x d, row-major
  SeedRecord seed_record;

  std::span<const double> increment(std::size_t k) const {
    return {brownian.data() + k * d_obs, d_obs};
  }
};

/// Controlled trajectory: accepted jumps of the thinned stream.
struct ChainPath {
  std::vector<double> jump_times;
  std::vector<std::size_t> jump_states;
  std::size_t initial_state = 0;
  double horizon = 0.0;

  /// Last accepted state at or before t.
  std::size_t state_at(double t) const noexcept {
    std::size_t s = initial_state;
    for (std::size_t n = 0; n < jump_times.size() && jump_times[n] <= t; ++n) s = jump_states[n];
    return s;
  }

  friend bool operator==(const ChainPath&, const ChainPath&) = default;
};

/// Observation increments dW_k on a step grid, row-major n_steps x d.
struct ObservationPath {
  TimeGrid grid;
  std::size_t d_obs = 0;
  std::vector<double> increments;

  std::span<const double> increment(std::size_t k) const {
    return {increments.data() + k * d_obs, d_obs};
  }
  /// W at grid point t_k.
  std::vector<double> value(std::size_t k) const {
    std::vector<double> w(d_obs, 0.0);
    for (std::size_t s = 0; s < k; ++s)
      for (std::size_t c = 0; c < d_obs; ++c) w[c] += increments[s * d_obs + c];
    return w;
  }
};

enum class Scheme { em, robust };

inline const char* to_string(Scheme s) { return s == Scheme::em ? "em" : "robust"; }

inline Scheme parse_scheme(const std::string& s) {
  if (s == "em") return Scheme::em;
  if (s == "robust") return Scheme::robust;
  throw Error(ErrorKind::invalid_argument, "unknown filter scheme '" + s + "'");
}

/// Unnormalized conditional law on the step grid, one N-vector per grid point.
struct FilterPath {
  TimeGrid grid;
  std::size_t n_states = 0;
  Scheme scheme = Scheme::robust;
  std::vector<double> rho;  ///< (n_steps + 1) x N

  std::span<const double> at(std::size_t k) const { return {rho.data() + k * n_states, n_states}; }

  double mass(std::size_t k) const {
    double m = 0.0;
    for (double v : at(k)) m += v;
    return m;
  }

  /// Normalized law rho_k / |rho_k|_1; empty when the mass vanishes.
  std::vector<double> normalized(std::size_t k) const {
    const double m = mass(k);
    if (!(m > 0.0)) return {};
    std::vector<double> pi(at(k).begin(), at(k).end());
    for (double& v : pi) v /= m;
    return pi;
  }
};

}  // namespace wonham
