#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "wonham/chain.hpp"
#include "wonham/filter.hpp"
#include "wonham/measure.hpp"
#include "wonham/model.hpp"
#include "wonham/parallel.hpp"
#include "wonham/paths.hpp"
#include "wonham/simulate.hpp"
#include "wonham/stats.hpp"

namespace wonham {

namespace detail {

/// Runs sample(path) for every path and folds the results in path order, so
/// the estimate does not depend on the thread count.
template <class Sample>
Estimate monte_carlo(std::size_t n_paths, Sample&& sample) {
  std::vector<double> values(n_paths);
  parallel_for(n_paths, [&](std::size_t p) { values[p] = sample(p); });
  RunningStats stats;
  for (double v : values) stats.add(v);
  return to_estimate(stats);
}

}  // namespace detail

/// Reward under the reference probability: W is Brownian, the chain is thinned
/// from the same seed and weighted by its Girsanov density.
inline Estimate estimate_reference(const ControlModel& model, const ControlPath& control,
                                   std::span<const double> initial_law, std::size_t n_paths,
                                   std::uint64_t seed) {
  const double horizon = control.horizon();
  return detail::monte_carlo(n_paths, [&](std::size_t p) {
    const DrivingNoise noise = sample_driving(seed, p, horizon, control.dt, model, initial_law);
    const ChainPath chain = thin_chain(noise, control, model);
    const ObservationPath obs{noise.grid, noise.d_obs, noise.brownian};
    const DensityPath z = girsanov_density(chain, control, obs, model);
    return reward_reference(chain, control, z, model);
  });
}

/// Reward under the physical probability from co-simulated paths.
inline Estimate estimate_physical(const ControlModel& model, const ControlSource& control,
                                  std::span<const double> initial_law, double horizon, double dt,
                                  std::size_t n_paths, std::uint64_t seed) {
  return detail::monte_carlo(n_paths, [&](std::size_t p) {
    const PhysicalPath path =
        simulate_physical(seed, p, model, control, initial_law, horizon, dt);
    return reward_physical(path.chain, path.control, model);
  });
}

/// Separated reward: the filter started from the initial law is driven by a
/// Brownian W under the reference probability.
inline Estimate estimate_separated(const ControlModel& model, const ControlSource& control,
                                   std::span<const double> initial_law, double horizon, double dt,
                                   std::size_t n_paths, std::uint64_t seed,
                                   Scheme scheme = Scheme::robust) {
  const TimeGrid grid = make_time_grid(horizon, dt);
  const auto x0 = detail::normalize_law(initial_law, model.n_states());
  return detail::monte_carlo(n_paths, [&](std::size_t p) {
    const ObservationPath obs{grid, model.d_obs(),
                              brownian_increments(seed, p, grid, model.d_obs())};
    const ControlledFilter run = drive_filter(obs, control, x0, scheme, model);
    return reward_separated(run.filter, run.control, model).value;
  });
}

}  // namespace wonham
