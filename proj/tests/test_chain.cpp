#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "wonham/chain.hpp"
#include "wonham/simulate.hpp"
#include "wonham/stats.hpp"

using namespace wonham;

namespace {

ControlModel symmetric_k(double rate, double k) {
  auto s = fixtures::two_state(rate, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0);
  s.k_intensity = k;
  return validate_model(s);
}

const std::vector<double> kStartAtOne{1.0, 0.0};

}  // namespace

TEST(Driving, ShortHorizonHasNoCandidates) {
  const auto m = symmetric_k(1.0, 4.0);
  const auto noise = sample_driving(3, 0, 1e-4, 1e-4, m, kStartAtOne);
  EXPECT_TRUE(noise.poisson_times.empty());
}

TEST(Driving, StreamsHaveEqualLength) {
  const auto m = symmetric_k(1.0, 4.0);
  const auto noise = sample_driving(3, 7, 10.0, 0.1, m, kStartAtOne);
  EXPECT_EQ(noise.poisson_times.size(), noise.marks.size());
  EXPECT_EQ(noise.poisson_times.size(), noise.uniforms.size());
  EXPECT_EQ(noise.brownian.size(), 100u);
  for (std::size_t n = 1; n < noise.poisson_times.size(); ++n)
    EXPECT_LT(noise.poisson_times[n - 1], noise.poisson_times[n]);
}

TEST(Driving, PoissonCountMean) {
  const auto m = symmetric_k(1.0, 4.0);
  RunningStats counts;
  for (std::size_t p = 0; p < 10000; ++p)
    counts.add(static_cast<double>(sample_driving(11, p, 10.0, 1.0, m, kStartAtOne, false)
                                       .poisson_times.size()));
  EXPECT_LE(std::abs(counts.mean() - 40.0), 3.0 * std::sqrt(40.0 / 1e4));
}

TEST(Driving, BrownianVariance) {
  const TimeGrid grid{0.01, 100};
  RunningStats sq;
  for (std::size_t p = 0; p < 200; ++p)
    for (double v : brownian_increments(5, p, grid, 1)) sq.add(v * v);
  EXPECT_NEAR(sq.mean(), 0.01, 3.0 * sq.std_error());
}

TEST(Driving, Deterministic) {
  const auto m = symmetric_k(1.0, 4.0);
  const auto a = sample_driving(99, 3, 5.0, 0.01, m, std::vector<double>{0.5, 0.5});
  const auto b = sample_driving(99, 3, 5.0, 0.01, m, std::vector<double>{0.5, 0.5});
  EXPECT_EQ(a.poisson_times, b.poisson_times);
  EXPECT_EQ(a.marks, b.marks);
  EXPECT_EQ(a.uniforms, b.uniforms);
  EXPECT_EQ(a.brownian, b.brownian);
  EXPECT_EQ(a.initial_state, b.initial_state);
}

TEST(Driving, AddingPathsKeepsExistingOnes) {
  const auto m = symmetric_k(1.0, 4.0);
  const auto a = sample_driving(99, 3, 5.0, 0.01, m, kStartAtOne);
  (void)sample_driving(99, 4, 5.0, 0.01, m, kStartAtOne);
  const auto b = sample_driving(99, 3, 5.0, 0.01, m, kStartAtOne);
  EXPECT_EQ(a.poisson_times, b.poisson_times);
}

TEST(Thinning, ZeroRatesNeverJump) {
  const auto m = symmetric_k(0.0, 4.0);
  const auto noise = sample_driving(1, 0, 10.0, 0.1, m, kStartAtOne);
  const auto path = thin_chain(noise, ControlPath::constant(0, noise.grid), m);
  EXPECT_TRUE(path.jump_times.empty());
  EXPECT_EQ(path.state_at(10.0), 0u);
}

TEST(Thinning, SingleCandidateHandEvaluation) {
  const auto m = symmetric_k(1.0, 4.0);
  DrivingNoise noise;
  noise.grid = {0.1, 10};
  noise.d_obs = 1;
  noise.initial_state = 0;
  noise.poisson_times = {0.5};
  noise.marks = {1};
  noise.uniforms = {0.3};
  const auto control = ControlPath::constant(0, noise.grid);
  auto path = thin_chain(noise, control, m);
  ASSERT_EQ(path.jump_times.size(), 1u);
  EXPECT_EQ(path.jump_times[0], 0.5);
  EXPECT_EQ(path.jump_states[0], 1u);
  noise.uniforms = {0.5};  // threshold N q / K = 0.5 is strict
  EXPECT_TRUE(thin_chain(noise, control, m).jump_times.empty());
  noise.uniforms = {0.01};
  noise.marks = {0};  // mark equal to the current state
  EXPECT_TRUE(thin_chain(noise, control, m).jump_times.empty());
}

TEST(Thinning, ShortControlIsRejected) {
  const auto m = symmetric_k(1.0, 4.0);
  DrivingNoise noise;
  noise.grid = {0.1, 10};
  noise.poisson_times = {0.75};
  noise.marks = {1};
  noise.uniforms = {0.3};
  const ControlPath short_control{0.1, std::vector<std::size_t>(5, 0)};
  try {
    thin_chain(noise, short_control, m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::control_undefined);
  }
}

TEST(Thinning, HoldingTimesAreExponential) {
  const auto m = symmetric_k(1.0, 4.0);
  const TimeGrid grid = make_time_grid(10.0, 0.5);
  const auto control = ControlPath::constant(0, grid);
  // First sojourn of each path, censored at the horizon.
  std::vector<double> holding;
  for (std::size_t p = 0; p < 20000; ++p) {
    const auto noise = sample_driving(21, p, 10.0, 0.5, m, kStartAtOne, false);
    const auto path = thin_chain(noise, control, m);
    holding.push_back(path.jump_times.empty() ? 10.0 : path.jump_times.front());
  }
  const double d = ks_statistic(holding, [](double x) { return 1.0 - std::exp(-x); }, 10.0);
  EXPECT_LT(d, ks_critical_1pct(holding.size()));
}

TEST(Compensator, ZeroRatesGiveZero) {
  const auto m = symmetric_k(0.0, 4.0);
  const auto noise = sample_driving(1, 0, 10.0, 0.1, m, kStartAtOne);
  const auto control = ControlPath::constant(0, noise.grid);
  const auto path = thin_chain(noise, control, m);
  EXPECT_EQ(compensator_residual(path, control, m, 0), 0.0);
  EXPECT_EQ(compensator_residual(path, control, m, 1), 0.0);
}

TEST(Compensator, HandComputed) {
  const auto m = symmetric_k(1.0, 4.0);
  ChainPath path;
  path.initial_state = 0;
  path.horizon = 2.0;
  path.jump_times = {0.5, 1.25};
  path.jump_states = {1, 0};
  const auto control = ControlPath::constant(0, TimeGrid{0.5, 4});
  // Into state 2: one jump, time spent in state 1 is 0.5 + 0.75.
  EXPECT_DOUBLE_EQ(compensator_residual(path, control, m, 1), 1.0 - 1.25);
  EXPECT_DOUBLE_EQ(compensator_residual(path, control, m, 0), 1.0 - 0.75);
}

TEST(Compensator, MeanZero) {
  const auto m = symmetric_k(1.0, 4.0);
  const TimeGrid grid = make_time_grid(10.0, 0.5);
  const auto control = ControlPath::constant(0, grid);
  RunningStats r;
  for (std::size_t p = 0; p < 10000; ++p) {
    const auto noise = sample_driving(8, p, 10.0, 0.5, m, kStartAtOne, false);
    r.add(compensator_residual(thin_chain(noise, control, m), control, m, 1));
  }
  EXPECT_LE(std::abs(r.mean()), 3.0 * r.std_error());
}

TEST(Physical, ZeroDriftObservationIsBrownian) {
  const auto m = symmetric_k(1.0, 4.0);
  const TimeGrid grid = make_time_grid(1.0, 0.01);
  RunningStats sq;
  for (std::size_t p = 0; p < 200; ++p) {
    const auto path = simulate_physical(4, p, m, ControlPath::constant(0, grid), kStartAtOne, 1.0, 0.01);
    for (double v : path.obs.increments) sq.add(v * v);
  }
  EXPECT_NEAR(sq.mean(), 0.01, 3.0 * sq.std_error());
}

TEST(Physical, ConstantDriftLawOfLargeNumbers) {
  const double c = 0.8;
  const auto m = validate_model(fixtures::two_state(0.0, c, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0));
  const TimeGrid grid = make_time_grid(2.0, 0.05);
  RunningStats wt;
  for (std::size_t p = 0; p < 10000; ++p) {
    const auto path =
        simulate_physical(6, p, m, ControlPath::constant(0, grid), kStartAtOne, 2.0, 0.05);
    wt.add(path.obs.value(grid.n_steps)[0]);
  }
  EXPECT_LE(std::abs(wt.mean() - c * 2.0), 3.0 * wt.std_error());
}

TEST(Physical, OpenLoopPassthrough) {
  const auto m = validate_model(fixtures::rate_control(1.0, 3, 1.0, -1.0, 0.0, 0.0, 1.0));
  ControlPath control{0.1, {0, 1, 2, 2, 1, 0, 0, 1, 2, 1}};
  const auto path = simulate_physical(2, 0, m, control, kStartAtOne, 1.0, 0.1);
  EXPECT_EQ(path.control, control);
}

TEST(Physical, SameSeedSamePath) {
  const auto m = validate_model(fixtures::rate_control(1.0, 3, 1.0, -1.0, 0.0, 0.0, 1.0));
  const FeedbackFn fb = [](double, std::span<const double> rho) {
    return rho[0] > rho[1] ? std::size_t{0} : std::size_t{2};
  };
  const auto a = simulate_physical(2, 5, m, fb, kStartAtOne, 1.0, 0.01);
  const auto b = simulate_physical(2, 5, m, fb, kStartAtOne, 1.0, 0.01);
  EXPECT_EQ(a.chain, b.chain);
  EXPECT_EQ(a.control, b.control);
  EXPECT_EQ(a.obs.increments, b.obs.increments);
}
