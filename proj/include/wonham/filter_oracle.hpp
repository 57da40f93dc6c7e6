#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "wonham/chain.hpp"
#include "wonham/filter.hpp"
#include "wonham/measure.hpp"
#include "wonham/parallel.hpp"

namespace wonham {

/// Monte Carlo estimate of the unnormalized filter with per-entry standard errors.
struct FilterEstimate {
  TimeGrid grid;
  std::size_t n_states = 0;
  std::size_t n_chains = 0;
  std::vector<double> mean;       ///< (n_steps + 1) x N
  std::vector<double> std_error;  ///< (n_steps + 1) x N

  double at(std::size_t k, std::size_t i) const { return mean[k * n_states + i]; }
  double se(std::size_t k, std::size_t i) const { return std_error[k * n_states + i]; }
};

/// Independent estimate of rho_t^i = E[1{X_t = i} Z_t | F^W] for an open-loop
/// control: chains are thinned from independent candidate streams while the
/// observation path stays fixed, so conditioning on W is plain averaging.
/// X_0 is drawn from x0 / |x0|_1 and the estimate is rescaled by |x0|_1.
inline FilterEstimate oracle_filter_openloop(const ObservationPath& obs, const ControlSource& source,
                                             std::span<const double> x0, std::size_t n_chains,
                                             std::uint64_t seed, const ControlModel& model) {
  const auto* control = std::get_if<ControlPath>(&source);
  if (!control)
    throw Error(ErrorKind::not_open_loop, "the filter oracle requires an open-loop control");
  check_initial_state(x0, model);
  detail::check_control(*control, obs.grid);
  if (n_chains < 2) throw Error(ErrorKind::invalid_argument, "oracle needs at least two chains");
  const std::size_t n = model.n_states();
  const std::size_t steps = obs.grid.n_steps;
  const std::size_t width = (steps + 1) * n;

  FilterEstimate out;
  out.grid = obs.grid;
  out.n_states = n;
  out.n_chains = n_chains;
  out.mean.assign(width, 0.0);
  out.std_error.assign(width, 0.0);

  double mass = 0.0;
  for (double v : x0) mass += v;
  if (!(mass > 0.0)) return out;

  constexpr std::size_t blocks = 64;
  std::vector<std::vector<double>> sum(blocks, std::vector<double>(width, 0.0));
  std::vector<std::vector<double>> sumsq(blocks, std::vector<double>(width, 0.0));
  parallel_for(blocks, [&](std::size_t b) {
    std::vector<std::size_t> states(steps + 1);
    for (std::size_t m = b; m < n_chains; m += blocks) {
      const DrivingNoise noise =
          sample_driving(seed, m, obs.grid.horizon(), obs.grid.dt, model, x0, false);
      const ChainPath chain = thin_chain(noise, *control, model);
      const DensityPath z = girsanov_density(chain, *control, obs, model);
      std::size_t state = chain.initial_state;
      std::size_t jump = 0;
      for (std::size_t k = 0; k <= steps; ++k) {
        const double t = obs.grid.time(k);
        while (jump < chain.jump_times.size() && chain.jump_times[jump] <= t)
          state = chain.jump_states[jump++];
        const double v = mass * z.values[k];
        sum[b][k * n + state] += v;
        sumsq[b][k * n + state] += v * v;
      }
    }
  });
  const double count = static_cast<double>(n_chains);
  for (std::size_t e = 0; e < width; ++e) {
    double s = 0.0;
    double s2 = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) {
      s += sum[b][e];
      s2 += sumsq[b][e];
    }
    const double mean = s / count;
    const double var = std::max(0.0, (s2 - count * mean * mean) / (count - 1.0));
    out.mean[e] = mean;
    out.std_error[e] = std::sqrt(var / count);
  }
  return out;
}

}  // namespace wonham
