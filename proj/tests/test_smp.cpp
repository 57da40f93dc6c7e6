#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "wonham/smp.hpp"

using namespace wonham;

namespace {

const std::vector<double> kLaw{0.3, 0.7};

SampleBatch constant_batch(const ControlModel& m, std::size_t label, std::size_t n, double dt,
                           std::uint64_t seed) {
  const TimeGrid grid = make_time_grid(*m.horizon(), dt);
  return sample_batch(m, ControlPath::constant(label, grid), kLaw, *m.horizon(), dt, n, seed);
}

}  // namespace

TEST(Adjoint, ConstantControlMatchesOccupancyOde) {
  const auto m = fixtures::linear_value_model();
  const auto batch = constant_batch(m, 0, 200, 0.01, 3);
  const auto adj = solve_adjoint(m, batch);
  EXPECT_NEAR(adj.mean_p(0, 0), fixtures::kOccupancyW1, 0.01);
  EXPECT_NEAR(adj.mean_p(0, 1), fixtures::kOccupancyW2, 0.01);
  EXPECT_NEAR(adj.mean_p(50, 0), fixtures::kHalfW1, 0.01);
  EXPECT_NEAR(adj.mean_p(50, 1), fixtures::kHalfW2, 0.01);
  for (std::size_t k = 0; k < batch.grid.n_steps; ++k) EXPECT_EQ(adj.basis_size[k], 1u);
}

TEST(Adjoint, ObservationDriftLeavesConstantControlCostateDeterministic) {
  // With a constant control p solves the same linear ODE whatever h is.
  const auto m = validate_model(fixtures::two_state(1.0, 1.0, -1.0, 1.0, 0.0, 0.0, 0.0, 1.0));
  const auto adj = solve_adjoint(m, constant_batch(m, 0, 400, 0.01, 5));
  EXPECT_NEAR(adj.mean_p(0, 0), fixtures::kOccupancyW1, 0.05);
  EXPECT_NEAR(adj.mean_p(0, 1), fixtures::kOccupancyW2, 0.05);
}

TEST(Adjoint, ZeroDataGiveZero) {
  const auto m = validate_model(fixtures::two_state(1.0, 1.0, -1.0, 0, 0, 0, 0, 1.0));
  const auto adj = solve_adjoint(m, constant_batch(m, 0, 50, 0.05, 1));
  for (double v : adj.p) EXPECT_EQ(v, 0.0);
  for (double v : adj.q) EXPECT_EQ(v, 0.0);
}

TEST(Adjoint, ConstantTerminalWithoutRewardIsPreserved) {
  const auto m = validate_model(fixtures::two_state(1.0, 1.0, -1.0, 0, 0, 2.0, 2.0, 1.0));
  const auto adj = solve_adjoint(m, constant_batch(m, 0, 50, 0.05, 1));
  for (double v : adj.p) EXPECT_NEAR(v, 2.0, 1e-12);
}

TEST(Adjoint, InfiniteHorizonIsRejected) {
  auto s = fixtures::two_state(1.0, 1.0, -1.0, 0, 0, 0, 0, 1.0);
  const auto finite = validate_model(s);
  const auto batch = constant_batch(finite, 0, 50, 0.05, 1);
  s.horizon.reset();
  s.discount = 1.0;
  EXPECT_THROW(solve_adjoint(validate_model(s), batch), Error);
}

TEST(Adjoint, BatchTooSmall) {
  const auto m = validate_model(fixtures::rate_control(1.0, 3, 1.0, -1.0, 1.0, 0.0, 1.0));
  const FeedbackFn fb = [](double, std::span<const double> rho) {
    return rho[0] > rho[1] ? std::size_t{0} : std::size_t{2};
  };
  const auto batch = sample_batch(m, fb, kLaw, 1.0, 0.05, 40, 2);
  try {
    solve_adjoint(m, batch);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::batch_too_small);
  }
}

TEST(Hamiltonian, ZeroFilterGivesZero) {
  const auto m = validate_model(fixtures::rate_control(1.0, 3, 1.0, -1.0, 1.0, 0.0, 1.0));
  const std::vector<double> rho{0, 0}, p{1.3, -0.4}, q{0.2, 0.7};
  for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(hamiltonian_smp(0.0, rho, a, p, q, m), 0.0);
}

TEST(Hamiltonian, HandEvaluation) {
  const auto m = validate_model(fixtures::rate_control(1.0, 3, 1.0, -1.0, 1.0, 0.0, 1.0));
  const std::vector<double> rho{0.3, 0.7}, p{1.3, -0.4}, q{0.2, 0.7};
  // a = 0.5: f = -0.125 per state, (Qp) = 0.5 * (-1.7, 1.7), h q = (0.2, -0.7).
  const double expected = 0.3 * (-0.125 - 0.85 + 0.2) + 0.7 * (-0.125 + 0.85 - 0.7);
  EXPECT_NEAR(hamiltonian_smp(0.0, rho, 1, p, q, m), expected, 1e-14);
}

TEST(Hamiltonian, LinearInFilter) {
  const auto m = validate_model(fixtures::rate_control(1.0, 3, 1.0, -1.0, 1.0, 0.0, 1.0));
  const std::vector<double> rho{0.3, 0.7}, rho3{0.9, 2.1}, p{1.3, -0.4}, q{0.2, 0.7};
  for (std::size_t a = 0; a < 3; ++a)
    EXPECT_NEAR(hamiltonian_smp(0.0, rho3, a, p, q, m), 3.0 * hamiltonian_smp(0.0, rho, a, p, q, m),
                1e-13);
}

TEST(MaxPrinciple, SingletonHasNoGap) {
  const auto m = fixtures::linear_value_model();
  const auto batch = constant_batch(m, 0, 50, 0.05, 1);
  const auto rep = check_max_principle(solve_adjoint(m, batch), batch, m);
  EXPECT_EQ(rep.max, 0.0);
  EXPECT_TRUE(rep.pass);
}

TEST(MaxPrinciple, ControlIndependentModelHasNoGap) {
  auto t = ModelSpec::zeros(2, 1, {"x", "y"});
  for (std::size_t a = 0; a < 2; ++a) {
    t.set_rate(a, 0, 1, 0.7);
    t.set_rate(a, 1, 0, 1.2);
    t.set_obs(0, a, 0, 1.0);
    t.set_obs(1, a, 0, -1.0);
    t.set_reward(0, a, 0.5);
  }
  t.terminal = {1.0, -0.5};
  t.horizon = 1.0;
  const auto m = validate_model(t);
  const auto batch = constant_batch(m, 1, 50, 0.05, 1);
  const auto rep = check_max_principle(solve_adjoint(m, batch), batch, m);
  EXPECT_NEAR(rep.max, 0.0, 1e-12);
  EXPECT_EQ(rep.violation_fraction, 0.0);
}

TEST(MaxPrinciple, ZeroControlIsSuboptimalForRateControl) {
  // With a = 0 the costate stays at g, so the per-mass gap is (((p2 - p1)(pi1 - pi2))^+)^2 / 2
  // at the grid maximizer, up to grid rounding.
  const auto m = validate_model(fixtures::rate_control(1.0, 11, 1.0, -1.0, 1.0, 0.0, 1.0));
  const auto batch = constant_batch(m, 0, 200, 0.01, 4);
  const auto adj = solve_adjoint(m, batch);
  for (double v : std::span<const double>(adj.p.data(), adj.p.size()))
    ASSERT_TRUE(std::isfinite(v));
  EXPECT_NEAR(adj.mean_p(0, 0), 1.0, 1e-12);
  const auto rep = check_max_principle(adj, batch, m, {0.02, 0.05});
  EXPECT_FALSE(rep.pass);
}
