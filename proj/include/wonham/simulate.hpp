#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "wonham/chain.hpp"
#include "wonham/filter.hpp"
#include "wonham/measure.hpp"
#include "wonham/model.hpp"
#include "wonham/paths.hpp"

namespace wonham {

/// One co-simulated path under the physical probability.
struct PhysicalPath {
  ChainPath chain;
  ObservationPath obs;
  ControlPath control;
  /// In-loop filter estimate; filled only for feedback controls.
  FilterPath filter;
};

/// Co-simulates chain, observation and control on the uniform dt grid:
/// W increments are int_cell h(X_s, a_k, s) ds + dB_k with dB Gaussian, the
/// chain is thinned from the same candidate stream, and the control on
/// [t_k, t_{k+1}) only uses data up to t_k. Feedback controls read the filter
/// rho-hat started from the normalized initial law.
inline PhysicalPath simulate_physical(std::uint64_t seed, std::uint64_t path,
                                      const ControlModel& model, const ControlSource& source,
                                      std::span<const double> initial_law, double horizon,
                                      double dt, Scheme scheme = Scheme::robust) {
  const DrivingNoise noise = sample_driving(seed, path, horizon, dt, model, initial_law);
  const TimeGrid& grid = noise.grid;
  const std::size_t d = model.d_obs();
  const std::size_t n = model.n_states();
  const auto* open_loop = std::get_if<ControlPath>(&source);
  const auto* feedback = std::get_if<FeedbackFn>(&source);
  if (open_loop) detail::check_control(*open_loop, grid);

  PhysicalPath out;
  out.obs.grid = grid;
  out.obs.d_obs = d;
  out.obs.increments.assign(grid.n_steps * d, 0.0);
  out.control.dt = grid.dt;
  out.control.labels.reserve(grid.n_steps);

  std::vector<double> rho;
  std::optional<FilterStepper> stepper;
  if (feedback) {
    rho = detail::normalize_law(initial_law, n);
    stepper.emplace(scheme, model);
    out.filter.grid = grid;
    out.filter.n_states = n;
    out.filter.scheme = scheme;
    out.filter.rho.reserve((grid.n_steps + 1) * n);
    out.filter.rho.insert(out.filter.rho.end(), rho.begin(), rho.end());
  }

  ThinningCursor cursor(noise, out.chain);
  const auto& knots = model.time_knots();
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    const double t0 = grid.time(k);
    const double t1 = grid.time(k + 1);
    const std::size_t label = open_loop ? open_loop->labels[k] : (*feedback)(t0, rho);
    if (label >= model.n_controls())
      throw Error(ErrorKind::control_undefined, "feedback returned an unknown control");
    out.control.labels.push_back(label);

    const std::size_t state0 = cursor.state();
    const std::size_t first_jump = out.chain.jump_times.size();
    cursor.advance(k + 1 == grid.n_steps ? std::nextafter(t1, INFINITY) : t1, label, model);

    // Exact occupation integral of h over the cell.
    auto dw = std::span<double>(out.obs.increments.data() + k * d, d);
    double s = t0;
    std::size_t state = state0;
    std::size_t jump = first_jump;
    while (s < t1) {
      double next = t1;
      if (jump < out.chain.jump_times.size() && out.chain.jump_times[jump] < next)
        next = out.chain.jump_times[jump];
      const std::size_t knot = model.knot_at(s);
      if (knot + 1 < knots.size() && knots[knot + 1] < next) next = knots[knot + 1];
      for (std::size_t c = 0; c < d; ++c) dw[c] += model.obs(state, label, knot, c) * (next - s);
      s = next;
      while (jump < out.chain.jump_times.size() && out.chain.jump_times[jump] <= s)
        state = out.chain.jump_states[jump++];
    }
    const auto db = noise.increment(k);
    for (std::size_t c = 0; c < d; ++c) dw[c] += db[c];

    if (feedback) {
      stepper->step(rho, label, t0, dw, grid.dt);
      out.filter.rho.insert(out.filter.rho.end(), rho.begin(), rho.end());
    }
  }
  return out;
}

}  // namespace wonham
