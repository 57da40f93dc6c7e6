#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wonham {

enum class ErrorKind {
  invalid_argument,
  bound_violation,
  negative_rate,
  intensity_too_small,
  inconsistent_horizon,
  control_undefined,
  grid_mismatch,
  step_too_large,
  non_finite_state,
  not_open_loop,
  cfl_violation,
  out_of_bounds_stencil,
  no_convergence,
  regression_rank_deficient,
  batch_too_small,
  config_error,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "InvalidArgument";
    case ErrorKind::bound_violation: return "BoundViolation";
    case ErrorKind::negative_rate: return "NegativeRate";
    case ErrorKind::intensity_too_small: return "IntensityTooSmall";
    case ErrorKind::inconsistent_horizon: return "InconsistentHorizon";
    case ErrorKind::control_undefined: return "ControlUndefined";
    case ErrorKind::grid_mismatch: return "GridMismatch";
    case ErrorKind::step_too_large: return "StepTooLarge";
    case ErrorKind::non_finite_state: return "NonFiniteState";
    case ErrorKind::not_open_loop: return "NotOpenLoop";
    case ErrorKind::cfl_violation: return "CflViolation";
    case ErrorKind::out_of_bounds_stencil: return "OutOfBoundsStencil";
    case ErrorKind::no_convergence: return "NoConvergence";
    case ErrorKind::regression_rank_deficient: return "RegressionRankDeficient";
    case ErrorKind::batch_too_small: return "BatchTooSmall";
    case ErrorKind::config_error: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Guards that protect numerical schemes (CFL, positivity step, convergence).
  bool is_numerical_guard() const noexcept {
    return kind_ == ErrorKind::cfl_violation || kind_ == ErrorKind::step_too_large ||
           kind_ == ErrorKind::no_convergence || kind_ == ErrorKind::non_finite_state ||
           kind_ == ErrorKind::regression_rank_deficient;
  }

 private:
  ErrorKind kind_;
};

/// Raised when the requested time step breaks monotonicity of the HJB scheme.
class CflViolation : public Error {
 public:
  CflViolation(double requested_dt, double max_dt)
      : Error(ErrorKind::cfl_violation,
              "time step " + std::to_string(requested_dt) + " exceeds admissible " +
                  std::to_string(max_dt)),
        requested_dt_(requested_dt),
        max_dt_(max_dt) {}

  double requested_dt() const noexcept { return requested_dt_; }
  double max_dt() const noexcept { return max_dt_; }

 private:
  double requested_dt_;
  double max_dt_;
};

class NoConvergence : public Error {
 public:
  NoConvergence(std::size_t iterations, std::vector<double> history)
      : Error(ErrorKind::no_convergence,
              "no convergence after " + std::to_string(iterations) + " iterations, residual " +
                  (history.empty() ? std::string("n/a") : std::to_string(history.back()))),
        iterations_(iterations),
        history_(std::move(history)) {}

  std::size_t iterations() const noexcept { return iterations_; }
  const std::vector<double>& residual_history() const noexcept { return history_; }

 private:
  std::size_t iterations_;
  std::vector<double> history_;
};

}  // namespace wonham
