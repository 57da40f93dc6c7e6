#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "wonham/error.hpp"
#include "wonham/model.hpp"
#include "wonham/paths.hpp"

namespace wonham {

/// One Euler-Maruyama step of the Wonham filter:
///   rho'_i = rho_i + sum_j rho_j q(a,t,j,i) dt + rho_i <h(i,a,t), dW>.
/// No positivity enforcement.
inline void step_em(std::span<const double> rho, std::size_t a, double t,
                    std::span<const double> dw, double dt, const ControlModel& model,
                    std::span<double> out) {
  const std::size_t n = model.n_states();
  const std::size_t knot = model.knot_at(t);
  for (std::size_t i = 0; i < n; ++i) {
    double drift = 0.0;
    for (std::size_t j = 0; j < n; ++j) drift += rho[j] * model.rate(a, knot, j, i);
    double noise = 0.0;
    for (std::size_t k = 0; k < dw.size(); ++k) noise += model.obs(i, a, knot, k) * dw[k];
    out[i] = rho[i] + drift * dt + rho[i] * noise;
  }
}

inline std::vector<double> step_em(std::span<const double> rho, std::size_t a, double t,
                                   std::span<const double> dw, double dt,
                                   const ControlModel& model) {
  std::vector<double> out(model.n_states());
  step_em(rho, a, t, dw, dt, model, out);
  return out;
}

/// Largest dt for which the explicit robust step keeps every diagonal factor
/// 1 + dt (q_ii - |h_i|^2 / 2) positive under control a at knot.
inline double robust_step_limit(std::size_t a, std::size_t knot, const ControlModel& model) {
  double worst = 0.0;
  for (std::size_t i = 0; i < model.n_states(); ++i)
    worst = std::max(worst, std::abs(model.rate(a, knot, i, i)) + 0.5 * model.obs_norm2(i, a, knot));
  return worst > 0.0 ? 1.0 / worst : INFINITY;
}

/// One explicit step of the robust (pathwise) form. With
/// accumulated_i = int_0^t h(i, alpha_s, s) . dW_s the robust variable is
/// nu_i = rho_i exp(-accumulated_i) and solves d nu/dt = A nu where
///   A_ii = q(a,t,i,i) - |h(i,a,t)|^2 / 2,
///   A_ij = q(a,t,j,i) exp(accumulated_j - accumulated_i),  j != i.
/// The step advances nu by explicit Euler, updates the accumulators with dW and
/// maps back. Strictly positive input stays strictly positive.
inline void step_robust(std::span<const double> rho, std::size_t a, double t,
                        std::span<const double> dw, double dt,
                        std::span<double> accumulated, const ControlModel& model,
                        std::span<double> out) {
  const std::size_t n = model.n_states();
  const std::size_t knot = model.knot_at(t);
  if (!(dt < robust_step_limit(a, knot, model)))
    throw Error(ErrorKind::step_too_large,
                "dt = " + std::to_string(dt) + " breaks positivity of the robust step (limit " +
                    std::to_string(robust_step_limit(a, knot, model)) + ")");
  // Small fixed-size scratch; N is at most a handful in practice.
  std::vector<double> nu(n);
  for (std::size_t i = 0; i < n; ++i) nu[i] = rho[i] * std::exp(-accumulated[i]);
  for (std::size_t i = 0; i < n; ++i) {
    double rhs = (model.rate(a, knot, i, i) - 0.5 * model.obs_norm2(i, a, knot)) * nu[i];
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      rhs += model.rate(a, knot, j, i) * std::exp(accumulated[j] - accumulated[i]) * nu[j];
    }
    out[i] = nu[i] + dt * rhs;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double inc = 0.0;
    for (std::size_t k = 0; k < dw.size(); ++k) inc += model.obs(i, a, knot, k) * dw[k];
    accumulated[i] += inc;
    out[i] *= std::exp(accumulated[i]);
  }
}

struct RobustStep {
  std::vector<double> rho;
  std::vector<double> accumulated;
};

inline RobustStep step_robust(std::span<const double> rho, std::size_t a, double t,
                              std::span<const double> dw, double dt,
                              std::span<const double> accumulated, const ControlModel& model) {
  RobustStep r{std::vector<double>(model.n_states()),
               std::vector<double>(accumulated.begin(), accumulated.end())};
  step_robust(rho, a, t, dw, dt, r.accumulated, model, r.rho);
  return r;
}

/// Advances a filter state by one step of either scheme; keeps the robust
/// accumulators alongside.
class FilterStepper {
 public:
  FilterStepper(Scheme scheme, const ControlModel& model)
      : scheme_(scheme), model_(&model), accumulated_(model.n_states(), 0.0),
        scratch_(model.n_states()) {}

  void step(std::span<double> rho, std::size_t a, double t, std::span<const double> dw,
            double dt) {
    if (scheme_ == Scheme::em) {
      step_em(rho, a, t, dw, dt, *model_, scratch_);
      for (double v : scratch_)
        if (!std::isfinite(v))
          throw Error(ErrorKind::non_finite_state, "filter state became non-finite at t = " +
                                                       std::to_string(t + dt));
    } else {
      step_robust(rho, a, t, dw, dt, accumulated_, *model_, scratch_);
    }
    std::copy(scratch_.begin(), scratch_.end(), rho.begin());
  }

 private:
  Scheme scheme_;
  const ControlModel* model_;
  std::vector<double> accumulated_;
  std::vector<double> scratch_;
};

inline void check_initial_state(std::span<const double> x0, const ControlModel& model) {
  if (x0.size() != model.n_states())
    throw Error(ErrorKind::invalid_argument, "initial state has the wrong size");
  for (double v : x0)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw Error(ErrorKind::invalid_argument, "initial state must lie in the cone D");
}

/// Integrates the controlled filter from rho_0 = x0 along the given observation
/// increments and open-loop control.
inline FilterPath integrate_filter(const ObservationPath& obs, const ControlPath& control,
                                   std::span<const double> x0, Scheme scheme,
                                   const ControlModel& model) {
  check_initial_state(x0, model);
  if (obs.d_obs != model.d_obs())
    throw Error(ErrorKind::grid_mismatch, "observation dimension does not match the model");
  if (control.labels.size() < obs.grid.n_steps || std::abs(control.dt - obs.grid.dt) > 1e-15)
    throw Error(ErrorKind::grid_mismatch, "control and observation grids differ");
  const std::size_t n = model.n_states();
  FilterPath out;
  out.grid = obs.grid;
  out.n_states = n;
  out.scheme = scheme;
  out.rho.resize((obs.grid.n_steps + 1) * n);
  std::copy(x0.begin(), x0.end(), out.rho.begin());
  FilterStepper stepper(scheme, model);
  std::vector<double> state(x0.begin(), x0.end());
  for (std::size_t k = 0; k < obs.grid.n_steps; ++k) {
    stepper.step(state, control.labels[k], obs.grid.time(k), obs.increment(k), obs.grid.dt);
    std::copy(state.begin(), state.end(), out.rho.begin() + static_cast<long>((k + 1) * n));
  }
  return out;
}

struct ControlledFilter {
  FilterPath filter;
  ControlPath control;
};

/// Integrates the filter under either an open-loop path or a feedback rule;
/// feedback is evaluated on the pre-step state of each cell.
inline ControlledFilter drive_filter(const ObservationPath& obs, const ControlSource& source,
                                     std::span<const double> x0, Scheme scheme,
                                     const ControlModel& model) {
  if (const auto* path = std::get_if<ControlPath>(&source))
    return {integrate_filter(obs, *path, x0, scheme, model),
            ControlPath{path->dt, std::vector<std::size_t>(
                                      path->labels.begin(),
                                      path->labels.begin() + static_cast<long>(obs.grid.n_steps))}};
  check_initial_state(x0, model);
  const auto& feedback = std::get<FeedbackFn>(source);
  const std::size_t n = model.n_states();
  ControlledFilter out;
  out.filter.grid = obs.grid;
  out.filter.n_states = n;
  out.filter.scheme = scheme;
  out.filter.rho.resize((obs.grid.n_steps + 1) * n);
  std::copy(x0.begin(), x0.end(), out.filter.rho.begin());
  out.control.dt = obs.grid.dt;
  out.control.labels.resize(obs.grid.n_steps);
  FilterStepper stepper(scheme, model);
  std::vector<double> state(x0.begin(), x0.end());
  for (std::size_t k = 0; k < obs.grid.n_steps; ++k) {
    const double t = obs.grid.time(k);
    const std::size_t a = feedback(t, state);
    if (a >= model.n_controls())
      throw Error(ErrorKind::control_undefined, "feedback returned an unknown control");
    out.control.labels[k] = a;
    stepper.step(state, a, t, obs.increment(k), obs.grid.dt);
    std::copy(state.begin(), state.end(), out.filter.rho.begin() + static_cast<long>((k + 1) * n));
  }
  return out;
}

}  // namespace wonham
