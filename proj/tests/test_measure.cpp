#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "wonham/estimators.hpp"
#include "wonham/measure.hpp"

using namespace wonham;

namespace {

const std::vector<double> kStartAtOne{1.0, 0.0};

ObservationPath fixed_observation(const TimeGrid& grid, std::uint64_t seed) {
  return {grid, 1, brownian_increments(seed, 0, grid, 1)};
}

}  // namespace

TEST(Girsanov, ZeroObservationDriftGivesUnitDensity) {
  const auto m = fixtures::linear_value_model();
  const TimeGrid grid = make_time_grid(1.0, 0.01);
  const auto control = ControlPath::constant(0, grid);
  const auto noise = sample_driving(3, 0, 1.0, 0.01, m, kStartAtOne);
  const auto z = girsanov_density(thin_chain(noise, control, m), control,
                                  fixed_observation(grid, 3), m);
  for (double v : z.values) EXPECT_EQ(v, 1.0);
}

TEST(Girsanov, ConstantDriftClosedForm) {
  const double c = 0.7;
  const auto m = validate_model(fixtures::two_state(1.0, c, c, 0, 0, 0, 0, 1.0));
  const TimeGrid grid = make_time_grid(1.0, 0.01);
  const auto control = ControlPath::constant(0, grid);
  const auto obs = fixed_observation(grid, 9);
  const auto noise = sample_driving(9, 1, 1.0, 0.01, m, kStartAtOne);
  const auto z = girsanov_density(thin_chain(noise, control, m), control, obs, m);
  EXPECT_NEAR(z.log_values.back(), c * obs.value(grid.n_steps)[0] - 0.5 * c * c, 1e-12);
}

TEST(Girsanov, SplitIntegralHandEvaluation) {
  const auto m = validate_model(fixtures::two_state(1.0, 1.0, -1.0, 0, 0, 0, 0, 1.0));
  const TimeGrid grid = make_time_grid(1.0, 0.1);
  const auto control = ControlPath::constant(0, grid);
  const auto obs = fixed_observation(grid, 17);
  ChainPath chain;
  chain.initial_state = 0;
  chain.horizon = 1.0;
  chain.jump_times = {0.5};
  chain.jump_states = {1};
  const auto z = girsanov_density(chain, control, obs, m);
  const double w_half = obs.value(5)[0];
  const double w_end = obs.value(10)[0];
  EXPECT_NEAR(z.log_values.back(), w_half - (w_end - w_half) - 0.5, 1e-12);
}

TEST(Girsanov, DensityIsAMartingale) {
  const auto m = validate_model(fixtures::two_state(1.0, 1.0, -1.0, 0, 0, 0, 0, 1.0));
  const TimeGrid grid = make_time_grid(1.0, 0.01);
  const auto control = ControlPath::constant(0, grid);
  RunningStats zt;
  for (std::size_t p = 0; p < 5000; ++p) {
    const auto noise = sample_driving(10, p, 1.0, 0.01, m, std::vector<double>{0.5, 0.5});
    const ObservationPath obs{grid, 1, noise.brownian};
    const auto z = girsanov_density(thin_chain(noise, control, m), control, obs, m);
    for (double v : z.values) ASSERT_GT(v, 0.0);
    zt.add(z.values.back());
  }
  EXPECT_LE(std::abs(zt.mean() - 1.0), 3.0 * zt.std_error());
}

TEST(Rewards, ZeroRewardsGiveZero) {
  const auto m = validate_model(fixtures::two_state(1.0, 1.0, -1.0, 0, 0, 0, 0, 1.0));
  const TimeGrid grid = make_time_grid(1.0, 0.01);
  const auto control = ControlPath::constant(0, grid);
  const auto noise = sample_driving(2, 0, 1.0, 0.01, m, kStartAtOne);
  const auto chain = thin_chain(noise, control, m);
  const ObservationPath obs{grid, 1, noise.brownian};
  EXPECT_EQ(reward_reference(chain, control, girsanov_density(chain, control, obs, m), m), 0.0);
  EXPECT_EQ(reward_physical(chain, control, m), 0.0);
  const std::vector<double> x0{0.0, 0.0};
  EXPECT_EQ(reward_separated(integrate_filter(obs, control, x0, Scheme::robust, m), control, m).value, 0.0);
}

TEST(Rewards, FrozenChainConstantIntegrand) {
  const auto m = validate_model(fixtures::two_state(0.0, 0.0, 0.0, 2.5, 0.0, 1.5, 0.0, 1.0));
  const TimeGrid grid = make_time_grid(1.0, 0.01);
  const auto control = ControlPath::constant(0, grid);
  const auto noise = sample_driving(2, 0, 1.0, 0.01, m, kStartAtOne);
  const auto chain = thin_chain(noise, control, m);
  const ObservationPath obs{grid, 1, noise.brownian};
  const auto z = girsanov_density(chain, control, obs, m);
  EXPECT_NEAR(reward_reference(chain, control, z, m), 2.5 + 1.5, 1e-12);
  EXPECT_NEAR(reward_physical(chain, control, m), 2.5 + 1.5, 1e-12);
}

TEST(Rewards, OccupancyOracle) {
  const auto m = fixtures::linear_value_model();
  const TimeGrid grid = make_time_grid(1.0, 0.01);
  const auto control = ControlPath::constant(0, grid);
  const auto ref = estimate_reference(m, control, kStartAtOne, 10000, 31);
  const auto phys = estimate_physical(m, control, kStartAtOne, 1.0, 0.01, 10000, 32);
  EXPECT_LE(std::abs(ref.mean - fixtures::kOccupancyW1), 3.0 * ref.std_error);
  EXPECT_LE(std::abs(phys.mean - fixtures::kOccupancyW1), 3.0 * phys.std_error);
}

TEST(Rewards, SeparatedDeterministicFilter) {
  const auto m = fixtures::linear_value_model();
  for (double dt : {0.01, 0.005}) {
    const TimeGrid grid = make_time_grid(1.0, dt);
    const auto control = ControlPath::constant(0, grid);
    const auto filter = integrate_filter(fixed_observation(grid, 1), control, kStartAtOne,
                                         Scheme::robust, m);
    const double err = std::abs(reward_separated(filter, control, m).value - fixtures::kOccupancyW1);
    EXPECT_LE(err, 1.0 * dt);
  }
}

TEST(Rewards, DiscountedConstantRewardWithTail) {
  auto s = fixtures::two_state(1.0, 0.5, -0.5, 0.5, 0.5, 0.0, 0.0, 1.0);
  s.horizon.reset();
  s.discount = 0.5;
  const auto m = validate_model(s);
  const double dt = 0.01;
  const double t_trunc = truncation_horizon(m, 1e-3, 1.0, dt);
  const auto est = estimate_separated(m, ControlPath::constant(0, make_time_grid(t_trunc, dt)),
                                      std::vector<double>{0.4, 0.6}, t_trunc, dt, 2000, 4);
  const double tail = std::exp(-0.5 * t_trunc) * 0.5 / 0.5;
  EXPECT_LE(tail, 1e-4 + 1e-12);
  EXPECT_LE(std::abs(est.mean - 0.5 / 0.5), tail + 3.0 * est.std_error);
}

TEST(Rewards, TripleAgreementSmall) {
  const auto m = validate_model(fixtures::two_state(1.0, 1.0, -1.0, 1.0, -0.5, 0.3, 0.8, 1.0));
  const TimeGrid grid = make_time_grid(1.0, 0.01);
  ControlPath control = ControlPath::constant(0, grid);
  const std::vector<double> law{0.3, 0.7};
  const auto ref = estimate_reference(m, control, law, 4000, 1);
  const auto phys = estimate_physical(m, control, law, 1.0, 0.01, 4000, 2);
  const auto sep = estimate_separated(m, control, law, 1.0, 0.01, 4000, 3);
  EXPECT_TRUE(intervals_overlap(ref, phys));
  EXPECT_TRUE(intervals_overlap(ref, sep));
  EXPECT_TRUE(intervals_overlap(phys, sep));
}
