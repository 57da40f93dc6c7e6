#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "wonham/error.hpp"

namespace wonham {

/// Unvalidated problem datum. Tables are flat and row-major:
///   rates   [control][knot][i][j]   (diagonal entries are ignored)
///   obs     [i][control][knot][k]
///   reward  [i][control][knot]
/// States and controls are 0-based here; the JSON loader converts.
struct ModelSpec {
  std::size_t n_states = 0;
  std::size_t d_obs = 1;
  std::vector<std::string> controls;
  std::vector<double> time_knots{0.0};
  std::vector<double> rates;
  std::vector<double> obs;
  std::vector<double> reward;
  std::vector<double> terminal;
  std::optional<double> horizon;
  std::optional<double> discount;
  std::optional<double> k0;
  std::optional<double> k_intensity;

  /// Allocates zero tables with the given shape.
  static ModelSpec zeros(std::size_t n_states, std::size_t d_obs, std::vector<std::string> controls,
                         std::vector<double> time_knots = {0.0}) {
    ModelSpec s;
    s.n_states = n_states;
    s.d_obs = d_obs;
    s.controls = std::move(controls);
    s.time_knots = std::move(time_knots);
    const std::size_t na = s.controls.size();
    const std::size_t nk = s.time_knots.size();
    s.rates.assign(na * nk * n_states * n_states, 0.0);
    s.obs.assign(n_states * na * nk * d_obs, 0.0);
    s.reward.assign(n_states * na * nk, 0.0);
    s.terminal.assign(n_states, 0.0);
    return s;
  }

  std::size_t rate_index(std::size_t a, std::size_t knot, std::size_t i, std::size_t j) const {
    return ((a * time_knots.size() + knot) * n_states + i) * n_states + j;
  }
  std::size_t obs_index(std::size_t i, std::size_t a, std::size_t knot, std::size_t k) const {
    return ((i * controls.size() + a) * time_knots.size() + knot) * d_obs + k;
  }
  std::size_t reward_index(std::size_t i, std::size_t a, std::size_t knot) const {
    return (i * controls.size() + a) * time_knots.size() + knot;
  }

  // Setters that apply to every knot; convenient for time-homogeneous models.
  void set_rate(std::size_t a, std::size_t i, std::size_t j, double value) {
    for (std::size_t t = 0; t < time_knots.size(); ++t) rates[rate_index(a, t, i, j)] = value;
  }
  void set_obs(std::size_t i, std::size_t a, std::size_t k, double value) {
    for (std::size_t t = 0; t < time_knots.size(); ++t) obs[obs_index(i, a, t, k)] = value;
  }
  void set_reward(std::size_t i, std::size_t a, double value) {
    for (std::size_t t = 0; t < time_knots.size(); ++t) reward[reward_index(i, a, t)] = value;
  }
};

/// Validated, immutable problem datum. Only `validate_model` constructs one.
class ControlModel {
 public:
  std::size_t n_states() const noexcept { return spec_.n_states; }
  std::size_t d_obs() const noexcept { return spec_.d_obs; }
  std::size_t n_controls() const noexcept { return spec_.controls.size(); }
  std::size_t n_knots() const noexcept { return spec_.time_knots.size(); }
  const std::vector<std::string>& controls() const noexcept { return spec_.controls; }
  const std::vector<double>& time_knots() const noexcept { return spec_.time_knots; }
  const std::vector<double>& terminal() const noexcept { return spec_.terminal; }
  std::optional<double> horizon() const noexcept { return spec_.horizon; }
  std::optional<double> discount() const noexcept { return spec_.discount; }
  bool finite_horizon() const noexcept { return spec_.horizon.has_value(); }
  double k0() const noexcept { return *spec_.k0; }
  double k_intensity() const noexcept { return *spec_.k_intensity; }

  /// Index of the coefficient piece active at time t (last knot <= t).
  std::size_t knot_at(double t) const noexcept {
    const auto& kn = spec_.time_knots;
    auto it = std::upper_bound(kn.begin(), kn.end(), t);
    return it == kn.begin() ? 0 : static_cast<std::size_t>(it - kn.begin()) - 1;
  }

  /// Rate q(a, knot, i, j); the diagonal is minus the off-diagonal row sum.
  double rate(std::size_t a, std::size_t knot, std::size_t i, std::size_t j) const {
    return spec_.rates[spec_.rate_index(a, knot, i, j)];
  }
  double obs(std::size_t i, std::size_t a, std::size_t knot, std::size_t k) const {
    return spec_.obs[spec_.obs_index(i, a, knot, k)];
  }
  std::span<const double> obs_vector(std::size_t i, std::size_t a, std::size_t knot) const {
    return {spec_.obs.data() + spec_.obs_index(i, a, knot, 0), spec_.d_obs};
  }
  double obs_norm2(std::size_t i, std::size_t a, std::size_t knot) const {
    double s = 0.0;
    for (double v : obs_vector(i, a, knot)) s += v * v;
    return s;
  }
  double reward(std::size_t i, std::size_t a, std::size_t knot) const {
    return spec_.reward[spec_.reward_index(i, a, knot)];
  }
  double terminal(std::size_t i) const { return spec_.terminal[i]; }

  /// Largest off-diagonal rate over all controls and knots.
  double max_rate() const noexcept { return max_rate_; }
  double max_abs_reward() const noexcept { return max_abs_reward_; }
  double max_abs_obs() const noexcept { return max_abs_obs_; }

  std::size_t control_index(const std::string& label) const {
    auto it = std::find(spec_.controls.begin(), spec_.controls.end(), label);
    if (it == spec_.controls.end())
      throw Error(ErrorKind::invalid_argument, "unknown control label '" + label + "'");
    return static_cast<std::size_t>(it - spec_.controls.begin());
  }

  /// The datum with resolved k0/K and derived diagonal; re-validating it is a no-op.
  const ModelSpec& spec() const noexcept { return spec_; }

  friend bool operator==(const ControlModel& a, const ControlModel& b) {
    const auto& x = a.spec_;
    const auto& y = b.spec_;
    return x.n_states == y.n_states && x.d_obs == y.d_obs && x.controls == y.controls &&
           x.time_knots == y.time_knots && x.rates == y.rates && x.obs == y.obs &&
           x.reward == y.reward && x.terminal == y.terminal && x.horizon == y.horizon &&
           x.discount == y.discount && x.k0 == y.k0 && x.k_intensity == y.k_intensity;
  }

 private:
  friend ControlModel validate_model(const ModelSpec& raw);
  explicit ControlModel(ModelSpec spec) : spec_(std::move(spec)) {}

  ModelSpec spec_;
  double max_rate_ = 0.0;
  double max_abs_reward_ = 0.0;
  double max_abs_obs_ = 0.0;
};

namespace detail {

inline std::string entry_name(const char* table, std::initializer_list<std::size_t> idx) {
  std::ostringstream os;
  os << table << '(';
  bool first = true;
  for (auto v : idx) {
    if (!first) os << ',';
    os << v + 1;
    first = false;
  }
  os << ')';
  return os.str();
}

inline void check_bound(double value, double k0, const std::string& what) {
  if (!std::isfinite(value))
    throw Error(ErrorKind::invalid_argument, what + " is not finite");
  if (std::abs(value) > k0) {
    std::ostringstream os;
    os << what << " = " << value << " exceeds K0 = " << k0;
    throw Error(ErrorKind::bound_violation, os.str());
  }
}

}  // namespace detail

/// Checks the datum and returns the immutable model.
///
/// Every table entry must be bounded by K0 (computed as the largest entry when
/// absent), off-diagonal rates must be nonnegative, and the thinning intensity
/// must dominate N * q. When K is absent it defaults to N * max q plus 10%.
/// Exactly one of horizon / discount must be set; infinite-horizon models are
/// restricted to a single time knot.
inline ControlModel validate_model(const ModelSpec& raw) {
  ModelSpec s = raw;
  const std::size_t n = s.n_states;
  const std::size_t na = s.controls.size();
  const std::size_t nk = s.time_knots.size();
  const std::size_t d = s.d_obs;

  if (n < 2) throw Error(ErrorKind::invalid_argument, "n_states must be at least 2");
  if (d < 1) throw Error(ErrorKind::invalid_argument, "d_obs must be at least 1");
  if (na == 0) throw Error(ErrorKind::invalid_argument, "control grid is empty");
  if (nk == 0 || s.time_knots.front() != 0.0)
    throw Error(ErrorKind::invalid_argument, "time_knots must start at 0");
  for (std::size_t t = 1; t < nk; ++t)
    if (!(s.time_knots[t] > s.time_knots[t - 1]))
      throw Error(ErrorKind::invalid_argument, "time_knots must be strictly increasing");
  if (s.rates.size() != na * nk * n * n || s.obs.size() != n * na * nk * d ||
      s.reward.size() != n * na * nk)
    throw Error(ErrorKind::invalid_argument, "table sizes do not match declared dimensions");
  if (s.terminal.empty()) s.terminal.assign(n, 0.0);
  if (s.terminal.size() != n)
    throw Error(ErrorKind::invalid_argument, "terminal reward must have n_states entries");

  if (s.horizon.has_value() == s.discount.has_value())
    throw Error(ErrorKind::inconsistent_horizon, "exactly one of horizon and discount is required");
  if (s.horizon && !(*s.horizon > 0.0))
    throw Error(ErrorKind::inconsistent_horizon, "horizon must be positive");
  if (s.discount) {
    if (!(*s.discount > 0.0))
      throw Error(ErrorKind::inconsistent_horizon, "discount must be positive");
    if (nk != 1)
      throw Error(ErrorKind::inconsistent_horizon,
                  "infinite-horizon models need time-independent coefficients");
  }

  double max_rate = 0.0;
  double max_entry = 0.0;
  double max_f = 0.0;
  double max_h = 0.0;
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t t = 0; t < nk; ++t)
      for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const double q = s.rates[s.rate_index(a, t, i, j)];
          if (!std::isfinite(q))
            throw Error(ErrorKind::invalid_argument,
                        detail::entry_name("q", {a, t, i, j}) + " is not finite");
          if (q < 0.0) {
            std::ostringstream os;
            os << detail::entry_name("q", {a, t, i, j}) << " = " << q << " is negative";
            throw Error(ErrorKind::negative_rate, os.str());
          }
          row += q;
          max_rate = std::max(max_rate, q);
        }
        s.rates[s.rate_index(a, t, i, i)] = -row;
      }
  for (double v : s.obs) max_h = std::max(max_h, std::abs(v));
  for (double v : s.reward) max_f = std::max(max_f, std::abs(v));
  max_entry = std::max({max_rate, max_h, max_f});
  for (double v : s.terminal) max_entry = std::max(max_entry, std::abs(v));

  if (!s.k0) s.k0 = max_entry;
  const double k0 = *s.k0;
  if (!(k0 >= 0.0)) throw Error(ErrorKind::invalid_argument, "k0 must be nonnegative");
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t t = 0; t < nk; ++t)
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
          if (i != j)
            detail::check_bound(s.rates[s.rate_index(a, t, i, j)], k0,
                                detail::entry_name("q", {a, t, i, j}));
        for (std::size_t k = 0; k < d; ++k)
          detail::check_bound(s.obs[s.obs_index(i, a, t, k)], k0,
                              detail::entry_name("h", {i, a, t, k}));
        detail::check_bound(s.reward[s.reward_index(i, a, t)], k0,
                            detail::entry_name("f", {i, a, t}));
      }
  for (std::size_t i = 0; i < n; ++i)
    detail::check_bound(s.terminal[i], k0, detail::entry_name("g", {i}));

  const double needed = static_cast<double>(n) * max_rate;
  if (!s.k_intensity) s.k_intensity = needed > 0.0 ? 1.1 * needed : 1.0;
  if (!(*s.k_intensity > 0.0) || *s.k_intensity < needed) {
    std::ostringstream os;
    os << "K = " << *s.k_intensity << " is below N * max q = " << needed;
    throw Error(ErrorKind::intensity_too_small, os.str());
  }

  ControlModel m(std::move(s));
  m.max_rate_ = max_rate;
  m.max_abs_reward_ = max_f;
  m.max_abs_obs_ = max_h;
  return m;
}

/// Running reward f(i,a,t) = sum_{j != i} ell(i,j,a,t) q(a,t,i,j) for jump costs
/// ell laid out as [i][j][control][knot]. Returns f in the ModelSpec reward
/// layout together with the bound its entries need.
struct JumpReward {
  std::vector<double> reward;
  double bound = 0.0;
};

inline JumpReward reward_from_jump_costs(std::span<const double> ell, const ControlModel& model) {
  const std::size_t n = model.n_states();
  const std::size_t na = model.n_controls();
  const std::size_t nk = model.n_knots();
  if (ell.size() != n * n * na * nk)
    throw Error(ErrorKind::invalid_argument, "jump-cost table has the wrong size");
  JumpReward out;
  out.reward.assign(n * na * nk, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < na; ++a)
      for (std::size_t t = 0; t < nk; ++t) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const double c = ell[((i * n + j) * na + a) * nk + t];
          if (!std::isfinite(c))
            throw Error(ErrorKind::invalid_argument, "jump cost is not finite");
          acc += c * model.rate(a, t, i, j);
        }
        out.reward[(i * na + a) * nk + t] = acc;
        out.bound = std::max(out.bound, std::abs(acc));
      }
  return out;
}

}  // namespace wonham
