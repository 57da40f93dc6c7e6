#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wonham/chain.hpp"
#include "wonham/error.hpp"
#include "wonham/filter.hpp"
#include "wonham/model.hpp"
#include "wonham/parallel.hpp"
#include "wonham/paths.hpp"
#include "wonham/stats.hpp"

namespace wonham {

/// Filter paths, their Brownian increments and the controls actually used,
/// all on one step grid (reference probability).
struct SampleBatch {
  TimeGrid grid;
  std::vector<ObservationPath> obs;
  std::vector<FilterPath> filters;
  std::vector<ControlPath> controls;

  std::size_t size() const noexcept { return filters.size(); }
};

inline SampleBatch sample_batch(const ControlModel& model, const ControlSource& control,
                                std::span<const double> x0, double horizon, double dt,
                                std::size_t n_samples, std::uint64_t seed,
                                Scheme scheme = Scheme::robust) {
  SampleBatch batch;
  batch.grid = make_time_grid(horizon, dt);
  batch.obs.resize(n_samples);
  batch.filters.resize(n_samples);
  batch.controls.resize(n_samples);
  parallel_for(n_samples, [&](std::size_t s) {
    batch.obs[s] = {batch.grid, model.d_obs(),
                    brownian_increments(seed, s, batch.grid, model.d_obs())};
    ControlledFilter run = drive_filter(batch.obs[s], control, x0, scheme, model);
    batch.filters[s] = std::move(run.filter);
    batch.controls[s] = std::move(run.control);
  });
  return batch;
}

/// Costate p and loadings q^k per sample and step, with regression
/// diagnostics per step.
struct AdjointPath {
  TimeGrid grid;
  std::size_t n_samples = 0;
  std::size_t n_states = 0;
  std::size_t d_obs = 0;
  std::vector<double> p;  ///< (n_steps + 1) x samples x N
  std::vector<double> q;  ///< n_steps x samples x d x N
  std::vector<std::size_t> basis_size;
  std::vector<double> residual_norm;

  std::span<const double> p_at(std::size_t step, std::size_t s) const {
    return {p.data() + (step * n_samples + s) * n_states, n_states};
  }
  std::span<const double> q_at(std::size_t step, std::size_t s) const {
    return {q.data() + (step * n_samples + s) * d_obs * n_states, d_obs * n_states};
  }
  /// Cross-sample mean of p_i at a step.
  double mean_p(std::size_t step, std::size_t i) const {
    double m = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) m += p_at(step, s)[i];
    return m / static_cast<double>(n_samples);
  }
};

struct AdjointOptions {
  std::size_t basis_degree = 2;
};

namespace detail {

inline bool constant_control(const SampleBatch& batch) {
  const auto& first = batch.controls.front().labels;
  if (std::adjacent_find(first.begin(), first.end(), std::not_equal_to<>()) != first.end())
    return false;
  for (const auto& c : batch.controls)
    if (c.labels != first) return false;
  return true;
}

/// Standardized features (pi_1..pi_{N-1}, |rho|_1) and all their monomials of
/// degree <= degree. Features without spread are dropped.
inline Eigen::MatrixXd regression_basis(const SampleBatch& batch, std::size_t step,
                                        std::size_t degree) {
  const std::size_t S = batch.size();
  const std::size_t n = batch.filters.front().n_states;
  Eigen::MatrixXd raw(S, n);
  for (std::size_t s = 0; s < S; ++s) {
    const auto rho = batch.filters[s].at(step);
    double m = 0.0;
    for (double v : rho) m += v;
    for (std::size_t i = 0; i + 1 < n; ++i) raw(s, i) = m > 0.0 ? rho[i] / m : 0.0;
    raw(s, n - 1) = m;
  }
  std::vector<Eigen::VectorXd> feats;
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const double mean = raw.col(c).mean();
    const double sd = std::sqrt((raw.col(c).array() - mean).square().mean());
    if (sd > 1e-12 * (1.0 + std::abs(mean)))
      feats.emplace_back((raw.col(c).array() - mean) / sd);
  }
  std::vector<Eigen::VectorXd> cols{Eigen::VectorXd::Ones(static_cast<Eigen::Index>(S))};
  // Monomials built degree by degree from non-decreasing feature indices.
  std::vector<std::pair<Eigen::VectorXd, std::size_t>> level{{cols.front(), 0}};
  for (std::size_t deg = 1; deg <= degree; ++deg) {
    std::vector<std::pair<Eigen::VectorXd, std::size_t>> next;
    for (const auto& [v, from] : level)
      for (std::size_t f = from; f < feats.size(); ++f) {
        next.emplace_back(v.cwiseProduct(feats[f]), f);
        cols.push_back(next.back().first);
      }
    level = std::move(next);
  }
  Eigen::MatrixXd basis(S, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) basis.col(static_cast<Eigen::Index>(c)) = cols[c];
  return basis;
}

}  // namespace detail

/// Backward regression for -dp = -sum_k q^k dW^k + (Q^a p + sum_k h_k(a) * q^k + f(a)) dt,
/// p_T = g. Per step: p-hat = E[p_{t+dt} | features] and
/// q-hat^k = E[(p_{t+dt} - p-hat) dW^k | features] / dt by least squares, then the explicit driver
/// correction evaluated at (p-hat, q-hat) with each sample's own control. A
/// batch whose controls are all one constant uses the constant basis.
inline AdjointPath solve_adjoint(const ControlModel& model, const SampleBatch& batch,
                                 const AdjointOptions& options = {}) {
  if (batch.size() == 0) throw Error(ErrorKind::batch_too_small, "empty sample batch");
  if (!model.finite_horizon())
    throw Error(ErrorKind::inconsistent_horizon, "the adjoint equation needs a finite horizon");
  const std::size_t S = batch.size();
  const std::size_t n = model.n_states();
  const std::size_t d = model.d_obs();
  const TimeGrid& grid = batch.grid;
  const std::size_t steps = grid.n_steps;
  const double dt = grid.dt;
  const bool constant = detail::constant_control(batch);
  const std::size_t degree = constant ? 0 : options.basis_degree;

  AdjointPath out;
  out.grid = grid;
  out.n_samples = S;
  out.n_states = n;
  out.d_obs = d;
  out.p.assign((steps + 1) * S * n, 0.0);
  out.q.assign(steps * S * d * n, 0.0);
  out.basis_size.assign(steps, 0);
  out.residual_norm.assign(steps, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t i = 0; i < n; ++i) out.p[(steps * S + s) * n + i] = model.terminal(i);

  for (std::size_t k = steps; k-- > 0;) {
    const Eigen::MatrixXd basis = detail::regression_basis(batch, k, degree);
    const auto b = static_cast<std::size_t>(basis.cols());
    out.basis_size[k] = b;
    if (S < 10 * b)
      throw Error(ErrorKind::batch_too_small,
                  "batch of " + std::to_string(S) + " samples is below 10 x basis size " +
                      std::to_string(b) + " at step " + std::to_string(k));
    Eigen::MatrixXd targets(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(n));
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t i = 0; i < n; ++i)
        targets(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) = out.p_at(k + 1, s)[i];
    std::optional<Eigen::ColPivHouseholderQR<Eigen::MatrixXd>> qr;
    if (b > 1) {
      qr.emplace(basis);
      if (static_cast<std::size_t>(qr->rank()) < b)
        throw Error(ErrorKind::regression_rank_deficient,
                    "regression basis of size " + std::to_string(b) + " has rank " +
                        std::to_string(qr->rank()) + " at step " + std::to_string(k));
    }
    auto project = [&](const Eigen::MatrixXd& y) -> Eigen::MatrixXd {
      if (!qr) return Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(S), 1) * y.colwise().mean();
      return basis * qr->solve(y);
    };
    const Eigen::MatrixXd p_hat = project(targets);
    // The loadings regress the centred continuation, which has the same
    // conditional expectation against dW but far less variance.
    Eigen::MatrixXd loads(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(n * d));
    for (std::size_t s = 0; s < S; ++s) {
      const auto row = static_cast<Eigen::Index>(s);
      const auto dw = batch.obs[s].increment(k);
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t i = 0; i < n; ++i) {
          const auto col = static_cast<Eigen::Index>(i);
          loads(row, static_cast<Eigen::Index>(c * n + i)) =
              (targets(row, col) - p_hat(row, col)) * dw[c] / dt;
        }
    }
    const Eigen::MatrixXd q_hat = project(loads);
    out.residual_norm[k] =
        std::sqrt((targets - p_hat).squaredNorm() /
                  static_cast<double>(S * n));

    const double t = grid.time(k);
    const std::size_t knot = model.knot_at(t);
    for (std::size_t s = 0; s < S; ++s) {
      const auto row = static_cast<Eigen::Index>(s);
      const std::size_t a = batch.controls[s].labels[k];
      double* p = out.p.data() + (k * S + s) * n;
      double* q = out.q.data() + (k * S + s) * d * n;
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t i = 0; i < n; ++i)
          q[c * n + i] = q_hat(row, static_cast<Eigen::Index>(c * n + i));
      for (std::size_t i = 0; i < n; ++i) {
        double drive = model.reward(i, a, knot);
        for (std::size_t j = 0; j < n; ++j)
          drive += model.rate(a, knot, i, j) * p_hat(row, static_cast<Eigen::Index>(j));
        for (std::size_t c = 0; c < d; ++c) drive += model.obs(i, a, knot, c) * q[c * n + i];
        p[i] = p_hat(row, static_cast<Eigen::Index>(i)) + drive * dt;
      }
      for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i]))
          throw Error(ErrorKind::non_finite_state, "costate became non-finite at step " +
                                                       std::to_string(k));
    }
  }
  return out;
}

/// H(t, rho, a, p, q) = <f(a,t), rho> + <Q^a p, rho> + sum_k <q^k, h_k(a,t) * rho>,
/// with q laid out d x N.
inline double hamiltonian_smp(double t, std::span<const double> rho, std::size_t a,
                              std::span<const double> p, std::span<const double> q,
                              const ControlModel& model) {
  const std::size_t n = model.n_states();
  const std::size_t knot = model.knot_at(t);
  double h = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double qp = 0.0;
    for (std::size_t j = 0; j < n; ++j) qp += model.rate(a, knot, i, j) * p[j];
    double load = 0.0;
    for (std::size_t c = 0; c < model.d_obs(); ++c) load += q[c * n + i] * model.obs(i, a, knot, c);
    h += rho[i] * (model.reward(i, a, knot) + qp + load);
  }
  return h;
}

struct SmpOptions {
  /// Gap tolerance per unit filter mass.
  double tolerance = 1e-2;
  /// Largest admissible fraction of (sample, step) pairs above tolerance.
  double level = 0.05;
};

struct SmpReport {
  std::size_t n_samples = 0;
  std::size_t n_steps = 0;
  double tolerance = 0.0;
  double level = 0.0;
  double violation_fraction = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p99 = 0.0;
  double max = 0.0;
  bool pass = false;
};

/// Gap max_a H - H(used control) at every (sample, step), divided by |rho|_1
/// so that paths of different mass are compared on one scale.
inline SmpReport check_max_principle(const AdjointPath& adjoint, const SampleBatch& batch,
                                     const ControlModel& model, const SmpOptions& options = {}) {
  if (adjoint.n_samples != batch.size() || adjoint.grid.n_steps != batch.grid.n_steps)
    throw Error(ErrorKind::grid_mismatch, "adjoint and batch do not match");
  const std::size_t S = batch.size();
  const std::size_t steps = batch.grid.n_steps;
  std::vector<double> gaps(S * steps);
  parallel_for(S, [&](std::size_t s) {
    for (std::size_t k = 0; k < steps; ++k) {
      const double t = batch.grid.time(k);
      const auto rho = batch.filters[s].at(k);
      const auto p = adjoint.p_at(k, s);
      const auto q = adjoint.q_at(k, s);
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < model.n_controls(); ++a)
        best = std::max(best, hamiltonian_smp(t, rho, a, p, q, model));
      const double used = hamiltonian_smp(t, rho, batch.controls[s].labels[k], p, q, model);
      const double mass = batch.filters[s].mass(k);
      gaps[s * steps + k] = mass > 0.0 ? (best - used) / mass : 0.0;
    }
  });
  SmpReport rep;
  rep.n_samples = S;
  rep.n_steps = steps;
  rep.tolerance = options.tolerance;
  rep.level = options.level;
  std::size_t over = 0;
  for (double g : gaps) over += g > options.tolerance ? 1 : 0;
  rep.violation_fraction = gaps.empty() ? 0.0 : static_cast<double>(over) / static_cast<double>(gaps.size());
  rep.p50 = quantile(gaps, 0.5);
  rep.p90 = quantile(gaps, 0.9);
  rep.p99 = quantile(gaps, 0.99);
  rep.max = gaps.empty() ? 0.0 : *std::max_element(gaps.begin(), gaps.end());
  rep.pass = rep.violation_fraction <= options.level;
  return rep;
}

}  // namespace wonham
