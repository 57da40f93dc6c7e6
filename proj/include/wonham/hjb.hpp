#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wonham/error.hpp"
#include "wonham/filter.hpp"
#include "wonham/grid.hpp"
#include "wonham/measure.hpp"
#include "wonham/model.hpp"
#include "wonham/parallel.hpp"
#include "wonham/paths.hpp"
#include "wonham/stats.hpp"

namespace wonham {

/// Coefficients of the separated problem at a point x of the cone:
/// sigma(i,k) = x_i h_k(i,a,t), drift_i = sum_j x_j q(a,t,j,i), reward = sum_i x_i f(i,a,t).
struct LocalCoefficients {
  std::size_t n_states = 0;
  std::size_t d_obs = 0;
  std::vector<double> sigma;  ///< N x d, row-major
  std::vector<double> drift;
  double reward = 0.0;

  double sigma_at(std::size_t i, std::size_t k) const { return sigma[i * d_obs + k]; }
};

inline LocalCoefficients local_coefficients(std::span<const double> x, std::size_t a, double t,
                                            const ControlModel& model) {
  const std::size_t n = model.n_states();
  const std::size_t d = model.d_obs();
  const std::size_t knot = model.knot_at(t);
  LocalCoefficients c{n, d, std::vector<double>(n * d), std::vector<double>(n, 0.0), 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) c.sigma[i * d + k] = x[i] * model.obs(i, a, knot, k);
    for (std::size_t j = 0; j < n; ++j) c.drift[i] += x[j] * model.rate(a, knot, j, i);
    c.reward += x[i] * model.reward(i, a, knot);
  }
  return c;
}

struct BracketResult {
  double value = 0.0;
  std::size_t control = 0;
};

/// max over the control grid of (1/2) tr(sigma sigma^T hess) + <grad, b> + r;
/// ties go to the earlier control. hess is N x N row-major.
inline BracketResult hamiltonian_bracket(double t, std::span<const double> x,
                                         std::span<const double> grad,
                                         std::span<const double> hess, const ControlModel& model) {
  const std::size_t n = model.n_states();
  BracketResult best{-std::numeric_limits<double>::infinity(), 0};
  for (std::size_t a = 0; a < model.n_controls(); ++a) {
    const LocalCoefficients c = local_coefficients(x, a, t, model);
    double v = c.reward;
    for (std::size_t i = 0; i < n; ++i) v += grad[i] * c.drift[i];
    for (std::size_t k = 0; k < c.d_obs; ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          v += 0.5 * hess[i * n + j] * c.sigma_at(i, k) * c.sigma_at(j, k);
    if (v > best.value) best = {v, a};
  }
  return best;
}

/// Largest time step keeping the explicit scheme monotone on the grid:
///   dt <= dx / (2 max_{box vertices, a, knot} sum_i |b_i|)   (upwind drift)
///   dt <= 1 / (2 d max |h_k(i)|^2)                          (x - s sigma_k stays in D)
inline double admissible_time_step(const ControlModel& model, const SpatialGrid& grid) {
  const std::size_t n = model.n_states();
  double drift = 0.0;
  std::vector<double> x(n);
  for (std::size_t knot = 0; knot < model.n_knots(); ++knot)
    for (std::size_t a = 0; a < model.n_controls(); ++a)
      for (std::size_t v = 0; v < (std::size_t{1} << n); ++v) {
        for (std::size_t i = 0; i < n; ++i) x[i] = ((v >> i) & 1U) ? grid.length() : 0.0;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double b = 0.0;
          for (std::size_t j = 0; j < n; ++j) b += x[j] * model.rate(a, knot, j, i);
          s += std::abs(b);
        }
        drift = std::max(drift, s);
      }
  const double h2 = model.max_abs_obs() * model.max_abs_obs();
  const double by_drift = drift > 0.0 ? 0.5 * grid.dx() / drift : INFINITY;
  const double by_diffusion = h2 > 0.0 ? 1.0 / (2.0 * static_cast<double>(model.d_obs()) * h2) : INFINITY;
  return std::min(by_drift, by_diffusion);
}

struct SolverReport {
  double dt = 0.0;
  double dx = 0.0;
  double cfl_bound = 0.0;
  std::size_t iterations = 0;
  double residual = 0.0;
  std::vector<double> history;
};

/// Discrete value function. Parabolic solves keep one value layer per time
/// step (or only layer 0 when requested) and one argmax layer per step;
/// elliptic solves keep a single stationary layer of each.
struct ValueGrid {
  SpatialGrid grid;
  TimeGrid time;
  bool stationary = false;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<std::uint16_t>> argmax;
  std::vector<std::string> labels;
  SolverReport report;

  const std::vector<double>& initial() const { return values.front(); }
  double value_at(std::span<const double> x, std::size_t layer = 0) const {
    return grid.interpolate(values.at(layer), x);
  }
};

namespace detail {

/// Linear update operator of one explicit step for a fixed control and knot,
/// stored as CSR rows: (S v)(x) = sum_e w_e v(node_e).
struct StepOperator {
  std::vector<std::size_t> row;
  std::vector<StencilEntry> entries;
  std::vector<double> reward;  ///< r(x, a) per node
};

inline StepOperator build_operator(const ControlModel& model, const SpatialGrid& grid,
                                   std::size_t a, std::size_t knot, double dt) {
  const std::size_t n = model.n_states();
  const std::size_t d = model.d_obs();
  const double dx = grid.dx();
  const double s = std::sqrt(2.0 * static_cast<double>(d) * dt);
  const double w_sl = 1.0 / (4.0 * static_cast<double>(d));
  StepOperator op;
  op.row.reserve(grid.size() + 1);
  op.row.push_back(0);
  op.reward.resize(grid.size());
  std::vector<double> x(n), y(n), b(n);
  for (std::size_t node = 0; node < grid.size(); ++node) {
    grid.coords(node, x);
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      b[i] = 0.0;
      for (std::size_t j = 0; j < n; ++j) b[i] += x[j] * model.rate(a, knot, j, i);
      r += x[i] * model.reward(i, a, knot);
    }
    op.reward[node] = r;
    double self = 0.5;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = dt * std::abs(b[i]) / dx;
      if (c == 0.0) continue;
      self -= c;
      const std::size_t idx = grid.axis_index(node, i);
      if (b[i] > 0.0) {
        if (idx + 1 < grid.per_axis()) {
          op.entries.push_back({node + grid.stride(i), c});
        } else {
          y = x;
          y[i] += dx;
          grid.stencil(y, c, op.entries);
        }
      } else {
        if (idx == 0)
          throw Error(ErrorKind::out_of_bounds_stencil, "upwind drift points out of the cone");
        op.entries.push_back({node - grid.stride(i), c});
      }
    }
    if (self < -1e-12)
      throw Error(ErrorKind::cfl_violation, "negative self weight in the step operator");
    op.entries.push_back({node, self});
    for (std::size_t k = 0; k < d; ++k) {
      for (int sign : {1, -1}) {
        for (std::size_t i = 0; i < n; ++i)
          y[i] = x[i] * (1.0 + sign * s * model.obs(i, a, knot, k));
        grid.stencil(y, w_sl, op.entries);
      }
    }
    op.row.push_back(op.entries.size());
  }
  return op;
}

inline std::vector<std::vector<StepOperator>> build_operators(const ControlModel& model,
                                                              const SpatialGrid& grid, double dt) {
  std::vector<std::vector<StepOperator>> ops(model.n_knots());
  for (std::size_t knot = 0; knot < model.n_knots(); ++knot)
    for (std::size_t a = 0; a < model.n_controls(); ++a)
      ops[knot].push_back(build_operator(model, grid, a, knot, dt));
  return ops;
}

/// out(x) = max_a [(S_a v)(x) + reward_scale r(x, a)], first maximizer kept.
inline void bellman_update(const std::vector<StepOperator>& ops, std::span<const double> v,
                           double reward_scale, std::span<double> out,
                           std::span<std::uint16_t> arg) {
  const std::size_t size = v.size();
  const std::size_t blocks = std::min<std::size_t>(default_thread_count(), 64);
  const std::size_t chunk = (size + blocks - 1) / blocks;
  parallel_for(blocks, [&](std::size_t blk) {
    const std::size_t lo = blk * chunk;
    const std::size_t hi = std::min(size, lo + chunk);
    for (std::size_t node = lo; node < hi; ++node) {
      double best = -std::numeric_limits<double>::infinity();
      std::uint16_t best_a = 0;
      for (std::size_t a = 0; a < ops.size(); ++a) {
        const StepOperator& op = ops[a];
        double acc = reward_scale * op.reward[node];
        for (std::size_t e = op.row[node]; e < op.row[node + 1]; ++e)
          acc += op.entries[e].weight * v[op.entries[e].node];
        if (acc > best) {
          best = acc;
          best_a = static_cast<std::uint16_t>(a);
        }
      }
      out[node] = best;
      arg[node] = best_a;
    }
  });
}

inline void check_control_count(const ControlModel& model) {
  if (model.n_controls() > std::numeric_limits<std::uint16_t>::max())
    throw Error(ErrorKind::invalid_argument, "too many controls for the policy table");
}

}  // namespace detail

struct ParabolicOptions {
  /// Required for discounted models, which have no horizon of their own.
  std::optional<double> horizon;
  /// Weight the running reward by e^{-beta t} (discounted models only).
  bool discounted = false;
  /// Keep every value layer; otherwise only layer 0 is returned.
  bool keep_layers = true;
};

/// Backward explicit stepping from v(T, x) = <x, g> with the monotone scheme:
/// upwind drift differences and a semi-Lagrangian second difference along each
/// sigma_k with offset sqrt(2 d dt). Refuses to run above the CFL bound.
inline ValueGrid solve_parabolic(const ControlModel& model, const SpatialGrid& grid,
                                 std::size_t n_time_steps, const ParabolicOptions& options = {}) {
  if (grid.dim() != model.n_states())
    throw Error(ErrorKind::grid_mismatch, "grid dimension differs from the state count");
  if (n_time_steps == 0) throw Error(ErrorKind::invalid_argument, "need at least one time step");
  detail::check_control_count(model);
  if (options.discounted && !model.discount())
    throw Error(ErrorKind::inconsistent_horizon, "discounting requested for an undiscounted model");
  const std::optional<double> horizon = options.horizon ? options.horizon : model.horizon();
  if (!horizon)
    throw Error(ErrorKind::inconsistent_horizon, "parabolic solve needs a horizon");
  const TimeGrid time{*horizon / static_cast<double>(n_time_steps), n_time_steps};
  const double bound = admissible_time_step(model, grid);
  if (time.dt > bound) throw CflViolation(time.dt, bound);

  ValueGrid out;
  out.grid = grid;
  out.time = time;
  out.labels = model.controls();
  out.report = {time.dt, grid.dx(), bound, n_time_steps, 0.0, {}};
  const auto ops = detail::build_operators(model, grid, time.dt);

  std::vector<double> next(grid.size(), 0.0);
  std::vector<double> x(grid.dim());
  if (model.finite_horizon() && !options.discounted) {
    for (std::size_t node = 0; node < grid.size(); ++node) {
      grid.coords(node, x);
      double v = 0.0;
      for (std::size_t i = 0; i < grid.dim(); ++i) v += x[i] * model.terminal(i);
      next[node] = v;
    }
  }
  const std::size_t kept = options.keep_layers ? n_time_steps + 1 : 1;
  out.values.assign(kept, {});
  if (options.keep_layers) out.values[n_time_steps] = next;
  out.argmax.assign(n_time_steps, std::vector<std::uint16_t>(grid.size()));
  std::vector<double> cur(grid.size());
  for (std::size_t layer = n_time_steps; layer-- > 0;) {
    const double t = time.time(layer);
    double scale = time.dt;
    if (options.discounted) scale *= std::exp(-*model.discount() * t);
    detail::bellman_update(ops[model.knot_at(t)], next, scale, cur, out.argmax[layer]);
    std::swap(cur, next);
    if (options.keep_layers) out.values[layer] = next;
  }
  if (!options.keep_layers) out.values[0] = next;
  return out;
}

struct EllipticOptions {
  double tolerance = 1e-10;
  std::size_t max_iterations = 1000000;
  /// Pseudo-time step; defaults to the CFL bound.
  std::optional<double> dt;
};

/// Value iteration v <- max_a (S_a v + dt r_a) / (1 + beta dt) until the
/// update, measured as max_x |dv(x)| / max(|x|_1, dx), drops below tolerance.
/// The operator contracts by 1 / (1 + beta dt) in that weighted norm.
inline ValueGrid solve_elliptic(const ControlModel& model, const SpatialGrid& grid,
                                const EllipticOptions& options = {}) {
  if (!model.discount())
    throw Error(ErrorKind::inconsistent_horizon, "elliptic solve needs a discounted model");
  if (grid.dim() != model.n_states())
    throw Error(ErrorKind::grid_mismatch, "grid dimension differs from the state count");
  detail::check_control_count(model);
  const double beta = *model.discount();
  const double bound = admissible_time_step(model, grid);
  const double dt = options.dt ? *options.dt : std::min(bound, 1.0);
  if (dt > bound) throw CflViolation(dt, bound);
  const auto ops = detail::build_operators(model, grid, dt);

  std::vector<double> weight(grid.size());
  std::vector<double> x(grid.dim());
  for (std::size_t node = 0; node < grid.size(); ++node) {
    grid.coords(node, x);
    double m = 0.0;
    for (double v : x) m += v;
    weight[node] = 1.0 / std::max(m, grid.dx());
  }

  ValueGrid out;
  out.grid = grid;
  out.stationary = true;
  out.labels = model.controls();
  out.argmax.assign(1, std::vector<std::uint16_t>(grid.size()));
  std::vector<double> v(grid.size(), 0.0), next(grid.size());
  const double shrink = 1.0 / (1.0 + beta * dt);
  std::vector<double> history;
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    detail::bellman_update(ops[0], v, dt, next, out.argmax[0]);
    double res = 0.0;
    for (std::size_t node = 0; node < grid.size(); ++node) {
      next[node] *= shrink;
      res = std::max(res, std::abs(next[node] - v[node]) * weight[node]);
    }
    std::swap(v, next);
    if (it == 1 || it % 100 == 0) history.push_back(res);
    if (res <= options.tolerance) {
      history.push_back(res);
      out.values.assign(1, v);
      out.report = {dt, grid.dx(), bound, it, res, std::move(history)};
      return out;
    }
  }
  throw NoConvergence(options.max_iterations, std::move(history));
}

/// Stored maximizers with an off-grid rule: a state x is looked up at the
/// simplex node nearest to x / |x|_1 (the argmax is scale invariant) in the
/// layer floor(t / dt), clamped to the last layer.
struct FeedbackPolicy {
  SpatialGrid grid;
  double dt = 0.0;
  bool stationary = false;
  std::vector<std::vector<std::uint16_t>> argmax;
  std::vector<std::string> labels;

  std::size_t layer(double t) const {
    if (stationary || argmax.size() <= 1) return 0;
    const double k = std::floor(t / dt + 1e-9);
    if (k <= 0.0) return 0;
    return std::min(static_cast<std::size_t>(k), argmax.size() - 1);
  }

  std::size_t lookup(double t, std::span<const double> x) const {
    return argmax[layer(t)][grid.nearest_simplex_node(x)];
  }

  FeedbackFn as_feedback() const {
    return [this](double t, std::span<const double> x) { return lookup(t, x); };
  }
};

inline FeedbackPolicy extract_policy(const ValueGrid& values) {
  return {values.grid, values.time.dt, values.stationary, values.argmax, values.labels};
}

struct ClosedLoopRun {
  FilterPath filter;
  ControlPath control;
  double reward = 0.0;
};

/// Closed-loop filter under the reference probability: W is Brownian, the
/// control of each cell is read from the policy at the pre-step state, and the
/// separated reward is accumulated along the way.
inline ClosedLoopRun simulate_closed_loop(std::uint64_t seed, std::uint64_t path,
                                          const ControlModel& model, const FeedbackPolicy& policy,
                                          std::span<const double> x0, Scheme scheme,
                                          double horizon, double dt) {
  const TimeGrid grid = make_time_grid(horizon, dt);
  const ObservationPath obs{grid, model.d_obs(), brownian_increments(seed, path, grid, model.d_obs())};
  ControlledFilter run = drive_filter(obs, policy.as_feedback(), x0, scheme, model);
  const double reward = reward_separated(run.filter, run.control, model).value;
  return {std::move(run.filter), std::move(run.control), reward};
}

struct ChallengerResult {
  Estimate reward;
  /// Paired difference challenger - closed loop on common random numbers.
  Estimate excess;
  bool ok = false;
};

struct VerificationReport {
  double value = 0.0;  ///< v(0, x0) from the grid
  Estimate closed_loop;
  std::vector<ChallengerResult> challengers;
  double scheme_budget = 0.0;
  double z = 3.0;
  bool value_ok = false;
  bool pass = false;
};

struct VerifyOptions {
  double dt = 1e-2;
  double horizon = 0.0;  ///< defaults to the model horizon
  double scheme_budget = 0.0;
  double z = 3.0;
  std::uint64_t seed = 1;
  Scheme scheme = Scheme::robust;
};

/// Monte Carlo check of the verification theorem: the closed-loop reward must
/// match v(0, x0) within z SE + scheme budget, and no open-loop challenger may
/// beat it by more than z SE of the paired difference + scheme budget. All
/// runs share the Brownian path of each sample.
inline VerificationReport verify_optimality(const ControlModel& model, const ValueGrid& values,
                                            const FeedbackPolicy& policy,
                                            std::span<const double> x0,
                                            const std::vector<ControlPath>& challengers,
                                            std::size_t n_paths, const VerifyOptions& options = {}) {
  const double horizon = options.horizon > 0.0 ? options.horizon
                         : model.horizon()     ? *model.horizon()
                                               : 0.0;
  const TimeGrid grid = make_time_grid(horizon, options.dt);
  const std::size_t m = challengers.size();
  std::vector<double> closed(n_paths);
  std::vector<double> chall(n_paths * m);
  parallel_for(n_paths, [&](std::size_t p) {
    const ObservationPath obs{grid, model.d_obs(),
                              brownian_increments(options.seed, p, grid, model.d_obs())};
    const ControlledFilter cl = drive_filter(obs, policy.as_feedback(), x0, options.scheme, model);
    closed[p] = reward_separated(cl.filter, cl.control, model).value;
    for (std::size_t c = 0; c < m; ++c) {
      const FilterPath fp = integrate_filter(obs, challengers[c], x0, options.scheme, model);
      chall[p * m + c] = reward_separated(fp, challengers[c], model).value;
    }
  });
  VerificationReport rep;
  rep.value = values.value_at(x0);
  rep.scheme_budget = options.scheme_budget;
  rep.z = options.z;
  RunningStats cl;
  for (double v : closed) cl.add(v);
  rep.closed_loop = to_estimate(cl);
  rep.value_ok = std::abs(rep.closed_loop.mean - rep.value) <=
                 options.z * rep.closed_loop.std_error + options.scheme_budget;
  rep.pass = rep.value_ok;
  for (std::size_t c = 0; c < m; ++c) {
    RunningStats r, diff;
    for (std::size_t p = 0; p < n_paths; ++p) {
      r.add(chall[p * m + c]);
      diff.add(chall[p * m + c] - closed[p]);
    }
    ChallengerResult res{to_estimate(r), to_estimate(diff), false};
    res.ok = res.excess.mean <= options.z * res.excess.std_error + options.scheme_budget;
    rep.pass = rep.pass && res.ok;
    rep.challengers.push_back(res);
  }
  return rep;
}

}  // namespace wonham
