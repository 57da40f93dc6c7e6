#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace wonham {

/// Welford accumulator for Monte Carlo means.
class RunningStats {
 public:
  void add(double x) noexcept {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double std_error() const noexcept {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;

  double lower(double z = 3.0) const noexcept { return mean - z * std_error; }
  double upper(double z = 3.0) const noexcept { return mean + z * std_error; }
};

inline Estimate to_estimate(const RunningStats& s) { return {s.mean(), s.std_error(), s.count()}; }

inline bool intervals_overlap(const Estimate& a, const Estimate& b, double z = 3.0) {
  return a.lower(z) <= b.upper(z) && b.lower(z) <= a.upper(z);
}

/// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|. Samples at or above
/// `censor` are only known to exceed it; the supremum is taken below it.
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf,
                           double censor = INFINITY) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double x = samples[k];
    if (x >= censor) {
      d = std::max(d, std::abs(static_cast<double>(k) / n - cdf(censor)));
      break;
    }
    const double f = cdf(x);
    d = std::max({d, std::abs(static_cast<double>(k + 1) / n - f),
                  std::abs(f - static_cast<double>(k) / n)});
  }
  return d;
}

/// Asymptotic two-sided 1% critical value of the KS statistic.
inline double ks_critical_1pct(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

/// Nearest-rank quantile of an unsorted sample.
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

}  // namespace wonham
