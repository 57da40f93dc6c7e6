#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "wonham/chain.hpp"
#include "wonham/error.hpp"
#include "wonham/model.hpp"
#include "wonham/paths.hpp"

namespace wonham {

/// Girsanov density Z on the step grid; Z_0 = 1.
struct DensityPath {
  TimeGrid grid;
  std::vector<double> values;
  std::vector<double> log_values;
};

namespace detail {

inline void check_horizon(double a, double b, const char* what) {
  if (std::abs(a - b) > 1e-9 * std::max(1.0, std::abs(a)))
    throw Error(ErrorKind::grid_mismatch, what);
}

inline void check_control(const ControlPath& control, const TimeGrid& grid) {
  if (control.labels.size() < grid.n_steps || std::abs(control.dt - grid.dt) > 1e-15)
    throw Error(ErrorKind::grid_mismatch, "control path does not match the step grid");
}

/// int_{s0}^{s1} e^{-beta s} ds, or s1 - s0 without discount.
inline double time_weight(double s0, double s1, const ControlModel& model) {
  if (!model.discount()) return s1 - s0;
  const double beta = *model.discount();
  return (std::exp(-beta * s0) - std::exp(-beta * s1)) / beta;
}

}  // namespace detail

/// log Z increment per cell: h(X_{t_k}, a_k, t_k) . dW_k - (1/2) int_cell |h(X_s, a_k, s)|^2 ds.
/// The quadratic term uses the exact occupation of the cell; the stochastic
/// term is attributed to the left-endpoint state.
inline DensityPath girsanov_density(const ChainPath& chain, const ControlPath& control,
                                    const ObservationPath& obs, const ControlModel& model) {
  detail::check_horizon(chain.horizon, obs.grid.horizon(),
                        "chain and observation horizons differ");
  detail::check_control(control, obs.grid);
  const std::size_t n = obs.grid.n_steps;
  std::vector<double> drift(n, 0.0);
  std::vector<std::size_t> left_state(n, chain.initial_state);
  std::vector<bool> seen(n, false);
  for_each_segment(chain, obs.grid, model,
                   [&](std::size_t k, double s0, double s1, std::size_t state, std::size_t knot) {
                     if (!seen[k]) {
                       left_state[k] = state;
                       seen[k] = true;
                     }
                     drift[k] += model.obs_norm2(state, control.labels[k], knot) * (s1 - s0);
                   });
  DensityPath out;
  out.grid = obs.grid;
  out.values.resize(n + 1);
  out.log_values.resize(n + 1);
  out.values[0] = 1.0;
  out.log_values[0] = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t a = control.labels[k];
    const std::size_t knot = model.knot_at(obs.grid.time(k));
    double stoch = 0.0;
    const auto dw = obs.increment(k);
    for (std::size_t c = 0; c < obs.d_obs; ++c) stoch += model.obs(left_state[k], a, knot, c) * dw[c];
    out.log_values[k + 1] = out.log_values[k] + stoch - 0.5 * drift[k];
    out.values[k + 1] = std::exp(out.log_values[k + 1]);
  }
  return out;
}

/// Single-path integrand of the reference-probability reward:
///   sum_k Z_{t_k} int_cell f(X_s, a_k, s) ds + Z_T g(X_T).
/// Discounted models weight the running reward by e^{-beta s} and drop g.
inline double reward_reference(const ChainPath& chain, const ControlPath& control,
                               const DensityPath& density, const ControlModel& model) {
  detail::check_horizon(chain.horizon, density.grid.horizon(),
                        "chain and density horizons differ");
  detail::check_control(control, density.grid);
  double total = 0.0;
  for_each_segment(chain, density.grid, model,
                   [&](std::size_t k, double s0, double s1, std::size_t state, std::size_t knot) {
                     total += density.values[k] * model.reward(state, control.labels[k], knot) *
                              detail::time_weight(s0, s1, model);
                   });
  if (model.finite_horizon())
    total += density.values.back() * model.terminal(chain.state_at(chain.horizon));
  return total;
}

/// Single-path integrand of the physical-probability reward: int f dt + g(X_T).
inline double reward_physical(const ChainPath& chain, const ControlPath& control,
                              const ControlModel& model) {
  const TimeGrid grid = make_time_grid(chain.horizon, control.dt);
  detail::check_control(control, grid);
  double total = 0.0;
  for_each_segment(chain, grid, model,
                   [&](std::size_t k, double s0, double s1, std::size_t state, std::size_t knot) {
                     total += model.reward(state, control.labels[k], knot) *
                              detail::time_weight(s0, s1, model);
                   });
  if (model.finite_horizon()) total += model.terminal(chain.state_at(chain.horizon));
  return total;
}

struct SeparatedReward {
  double value = 0.0;
  /// Bound on the neglected tail for discounted models, 0 otherwise.
  double tail_bound = 0.0;
};

/// Separated reward along a filter path: left-endpoint rule
///   sum_k w_k sum_i rho_k^i f(i, a_k, t_k) + <rho_T, g>,
/// with w_k = dt, or the exact discount integral over the cell for discounted
/// models. For those the path horizon is the truncation time and the tail
/// bound is e^{-beta T} sup|f| |rho_T|_1 / beta.
inline SeparatedReward reward_separated(const FilterPath& filter, const ControlPath& control,
                                        const ControlModel& model) {
  detail::check_control(control, filter.grid);
  const std::size_t n = model.n_states();
  SeparatedReward out;
  for (std::size_t k = 0; k < filter.grid.n_steps; ++k) {
    const double t0 = filter.grid.time(k);
    const std::size_t a = control.labels[k];
    const std::size_t knot = model.knot_at(t0);
    const auto rho = filter.at(k);
    double rate = 0.0;
    for (std::size_t i = 0; i < n; ++i) rate += rho[i] * model.reward(i, a, knot);
    out.value += rate * detail::time_weight(t0, filter.grid.time(k + 1), model);
  }
  const auto last = filter.at(filter.grid.n_steps);
  if (model.finite_horizon()) {
    for (std::size_t i = 0; i < n; ++i) out.value += last[i] * model.terminal(i);
  } else {
    const double beta = *model.discount();
    out.tail_bound = std::exp(-beta * filter.grid.horizon()) * model.max_abs_reward() *
                     filter.mass(filter.grid.n_steps) / beta;
  }
  return out;
}

/// Smallest multiple of dt at which the discounted tail bound, for initial mass
/// `mass`, is at most target_error / 10.
inline double truncation_horizon(const ControlModel& model, double target_error, double mass,
                                 double dt) {
  if (!model.discount())
    throw Error(ErrorKind::inconsistent_horizon, "truncation applies to discounted models only");
  if (!(target_error > 0.0)) throw Error(ErrorKind::invalid_argument, "target error must be positive");
  const double beta = *model.discount();
  const double scale = model.max_abs_reward() * mass / beta;
  double t = scale > 0.0 ? std::log(10.0 * scale / target_error) / beta : dt;
  t = std::max(t, dt);
  return std::ceil(t / dt - 1e-9) * dt;
}

}  // namespace wonham
