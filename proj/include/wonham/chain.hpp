#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "wonham/error.hpp"
#include "wonham/model.hpp"
#include "wonham/paths.hpp"
#include "wonham/random.hpp"

namespace wonham {

namespace detail {

inline std::vector<double> normalize_law(std::span<const double> law, std::size_t n) {
  if (law.size() != n) throw Error(ErrorKind::invalid_argument, "initial law has the wrong size");
  double total = 0.0;
  for (double v : law) {
    if (!(v >= 0.0)) throw Error(ErrorKind::invalid_argument, "initial law must be nonnegative");
    total += v;
  }
  if (!(total > 0.0)) throw Error(ErrorKind::invalid_argument, "initial law has zero mass");
  std::vector<double> p(law.begin(), law.end());
  for (double& v : p) v /= total;
  return p;
}

}  // namespace detail

inline std::vector<double> brownian_increments(std::uint64_t seed, std::uint64_t path,
                                               const TimeGrid& grid, std::size_t d) {
  Engine eng = make_engine(seed, path, Stream::brownian);
  std::normal_distribution<double> gauss(0.0, std::sqrt(grid.dt));
  std::vector<double> out(grid.n_steps * d);
  for (double& v : out) v = gauss(eng);
  return out;
}

/// Draws the driving randomness for one path. Each stream has its own engine
/// derived from (seed, path); `with_brownian = false` skips the Gaussian stream
/// (used when the observation path is held fixed).
inline DrivingNoise sample_driving(std::uint64_t seed, std::uint64_t path, double horizon, double dt,
                                   const ControlModel& model, std::span<const double> initial_law,
                                   bool with_brownian = true) {
  DrivingNoise out;
  out.grid = make_time_grid(horizon, dt);
  out.d_obs = model.d_obs();
  out.seed_record = {seed, path};

  const auto law = detail::normalize_law(initial_law, model.n_states());
  Engine init = make_engine(seed, path, Stream::initial);
  std::discrete_distribution<std::size_t> pick(law.begin(), law.end());
  out.initial_state = pick(init);

  Engine times = make_engine(seed, path, Stream::poisson);
  Engine marks = make_engine(seed, path, Stream::marks);
  Engine unif = make_engine(seed, path, Stream::uniforms);
  std::exponential_distribution<double> gap(model.k_intensity());
  std::uniform_int_distribution<std::size_t> mark(0, model.n_states() - 1);
  const double end = out.grid.horizon();
  for (double t = gap(times); t <= end; t += gap(times)) {
    out.poisson_times.push_back(t);
    out.marks.push_back(mark(marks));
    out.uniforms.push_back(open_uniform(unif));
  }
  if (with_brownian) out.brownian = brownian_increments(seed, path, out.grid, model.d_obs());
  return out;
}

/// Incremental thinning over the candidate stream, used when the control is
/// decided cell by cell.
class ThinningCursor {
 public:
  ThinningCursor(const DrivingNoise& noise, ChainPath& out) : noise_(&noise), out_(&out) {
    out.initial_state = noise.initial_state;
    out.horizon = noise.grid.horizon();
    state_ = noise.initial_state;
  }

  std::size_t state() const noexcept { return state_; }
  std::size_t consumed() const noexcept { return next_; }
  bool exhausted() const noexcept { return next_ >= noise_->poisson_times.size(); }

  /// Processes candidates with T_n < t_end under the given control.
  /// Candidate n is accepted iff X_n differs from the current state and
  /// U_n < N q(a, T_n, current, X_n) / K.
  void advance(double t_end, std::size_t label, const ControlModel& model) {
    const auto& times = noise_->poisson_times;
    const double scale = static_cast<double>(model.n_states()) / model.k_intensity();
    while (next_ < times.size() && times[next_] < t_end) {
      const double t = times[next_];
      const std::size_t target = noise_->marks[next_];
      if (target != state_) {
        const double q = model.rate(label, model.knot_at(t), state_, target);
        if (noise_->uniforms[next_] < scale * q) {
          out_->jump_times.push_back(t);
          out_->jump_states.push_back(target);
          state_ = target;
        }
      }
      ++next_;
    }
  }

 private:
  const DrivingNoise* noise_;
  ChainPath* out_;
  std::size_t state_ = 0;
  std::size_t next_ = 0;
};

/// Thinned chain for an open-loop control (the nu_k recursion). Candidates
/// whose mark equals the current state are rejected.
inline ChainPath thin_chain(const DrivingNoise& noise, const ControlPath& control,
                            const ControlModel& model) {
  ChainPath out;
  ThinningCursor cursor(noise, out);
  const double horizon = noise.grid.horizon();
  for (std::size_t k = 0; k < control.labels.size(); ++k) {
    const double t_end = control.dt * static_cast<double>(k + 1);
    cursor.advance(t_end, control.labels[k], model);
    if (cursor.exhausted()) break;
  }
  if (!cursor.exhausted() && noise.poisson_times[cursor.consumed()] <= horizon) {
    if (control.labels.empty())
      throw Error(ErrorKind::control_undefined, "empty control path");
    // The last cell is closed on the right at the horizon.
    if (noise.poisson_times[cursor.consumed()] <= control.horizon() * (1.0 + 1e-12))
      cursor.advance(std::nextafter(horizon, INFINITY), control.labels.back(), model);
    else
      throw Error(ErrorKind::control_undefined,
                  "control path ends before candidate time " +
                      std::to_string(noise.poisson_times[cursor.consumed()]));
  }
  return out;
}

/// Visits the maximal sub-intervals of the step grid on which the chain state,
/// the control cell and the coefficient knot are all constant:
/// fn(cell, s0, s1, state, knot).
template <class Fn>
void for_each_segment(const ChainPath& chain, const TimeGrid& grid, const ControlModel& model,
                      Fn&& fn) {
  const auto& knots = model.time_knots();
  std::size_t jump = 0;
  std::size_t state = chain.initial_state;
  auto absorb = [&](double s) {
    while (jump < chain.jump_times.size() && chain.jump_times[jump] <= s)
      state = chain.jump_states[jump++];
  };
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    double s = grid.time(k);
    const double c1 = grid.time(k + 1);
    absorb(s);
    while (s < c1) {
      double next = c1;
      if (jump < chain.jump_times.size() && chain.jump_times[jump] < next)
        next = chain.jump_times[jump];
      const std::size_t knot = model.knot_at(s);
      if (knot + 1 < knots.size() && knots[knot + 1] < next) next = knots[knot + 1];
      if (next > s) fn(k, s, next, state, knot);
      s = next;
      absorb(s);
    }
  }
}

/// M_T(j): accepted jumps into j on (0, T] minus the exact integral of
/// q(alpha_s, s, X_{s-}, j) 1{X_{s-} != j} over [0, T].
inline double compensator_residual(const ChainPath& path, const ControlPath& control,
                                   const ControlModel& model, std::size_t target) {
  if (target >= model.n_states())
    throw Error(ErrorKind::invalid_argument, "target state out of range");
  const TimeGrid grid = make_time_grid(path.horizon, control.dt);
  if (grid.n_steps > control.labels.size())
    throw Error(ErrorKind::grid_mismatch, "control path shorter than the chain horizon");
  double count = 0.0;
  for (std::size_t n = 0; n < path.jump_times.size(); ++n)
    if (path.jump_states[n] == target && path.jump_times[n] <= path.horizon) count += 1.0;
  double compensator = 0.0;
  for_each_segment(path, grid, model,
                   [&](std::size_t k, double s0, double s1, std::size_t state, std::size_t knot) {
                     if (state != target)
                       compensator += model.rate(control.labels[k], knot, state, target) * (s1 - s0);
                   });
  return count - compensator;
}

}  // namespace wonham
