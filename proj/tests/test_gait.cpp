#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "doctest.h"
#include "oracles.hpp"
#include "stairwalk/gait.hpp"

using namespace stairwalk;
using namespace stairwalk::gait;

namespace {

RewardInputs neutral_inputs() {
  RewardInputs in;
  in.action = Eigen::VectorXd::Zero(7);
  in.previous_action = Eigen::VectorXd::Zero(7);
  in.torque = Eigen::VectorXd::Zero(6);
  return in;
}

Quat random_unit(std::mt19937_64& g) {
  std::normal_distribution<double> n;
  Eigen::Vector4d v(n(g), n(g), n(g), n(g));
  v.normalize();
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

TEST_SUITE("gait") {

TEST_CASE("clock inputs at reference phases") {
  auto [a0, b0] = clock_inputs(0.0);
  CHECK(a0 == doctest::Approx(0.0));
  CHECK(b0 == doctest::Approx(0.0));
  auto [a1, b1] = clock_inputs(0.25);
  CHECK(a1 == doctest::Approx(1.0));
  CHECK(b1 == doctest::Approx(-1.0));
}

TEST_CASE("advance_phase wraps modulo one") {
  CHECK(advance_phase(0.9, 0.2) == doctest::Approx(0.1));
  CHECK(advance_phase(0.0, 0.0) == 0.0);
  CHECK(advance_phase(0.5, 0.5) == 0.0);
  const double p = advance_phase(0.999999999, 1e-9);
  CHECK(p >= 0.0);
  CHECK(p < 1.0);
}

TEST_CASE("nominal increments complete one cycle in 0.7 s at 40 Hz") {
  GaitClock c;
  CHECK(c.nominal_delta() == doctest::Approx(0.025 / 0.7));
  int steps = 0;
  double unwrapped = 0.0;
  while (unwrapped < 1.0 - 1e-9) {
    c.advance(c.nominal_delta());
    unwrapped += c.nominal_delta();
    ++steps;
  }
  CHECK(steps * 0.025 == doctest::Approx(0.7));
  CHECK(std::min(c.phase, 1.0 - c.phase) < 1e-9);
}

TEST_CASE("phase increments are clamped to half and one and a half times nominal") {
  GaitClock c;
  c.advance(10.0);
  CHECK(c.phase == doctest::Approx(1.5 * c.nominal_delta()));
  GaitClock d;
  d.advance(-1.0);
  CHECK(d.phase == doctest::Approx(0.5 * d.nominal_delta()));
}

TEST_CASE("Von Mises CDF is a proper distribution function") {
  const VonMisesCdf cdf(32.0);
  CHECK(cdf(-0.5) == 0.0);
  CHECK(cdf(0.5) == 1.0);
  CHECK(cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  double prev = 0.0;
  for (double x = -0.5; x <= 0.5; x += 0.001) {
    const double v = cdf(x);
    CHECK(v >= prev - 1e-15);
    CHECK(cdf(-x) == doctest::Approx(1.0 - v).epsilon(1e-9));
    prev = v;
  }
  CHECK_THROWS_AS(VonMisesCdf(0.0), ConfigError);
}

TEST_CASE("indicator expectation limits and boundary value") {
  PhaseIndicatorSpec s{IndicatorKind::left_force, 0.0, 0.5, 1e4};
  CHECK(indicator_expectation(s, 0.25) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(indicator_expectation(s, 0.75) == doctest::Approx(0.0).epsilon(1e-3));
  PhaseIndicatorSpec k32{IndicatorKind::left_force, 0.0, 0.5, 32.0};
  const double interior = indicator_expectation(k32, 0.25);
  CHECK(indicator_expectation(k32, 0.0) == doctest::Approx(0.5 * interior).epsilon(1e-3));
  CHECK(indicator_expectation(k32, 0.5) == doctest::Approx(0.5 * interior).epsilon(1e-3));
}

TEST_CASE("indicator expectation is periodic and rises monotonically into the interval") {
  PhaseIndicatorSpec s{IndicatorKind::left_velocity, 0.5, 1.0, 32.0};
  for (double p = 0.0; p < 1.0; p += 0.013) CHECK(indicator_expectation(s, p) == doctest::Approx(indicator_expectation(s, p + 1.0)).epsilon(1e-12));
  double prev = 0.0;
  for (double p = 0.3; p <= 0.75; p += 0.005) {
    const double v = indicator_expectation(s, p);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
}

TEST_CASE("force and velocity coefficients alternate, right is the left shifted by half a cycle") {
  const IndicatorSet set;
  for (double p = 0.0; p < 1.0; p += 0.01) {
    CHECK(indicator_expectation(set.right_force, p) == doctest::Approx(indicator_expectation(set.left_force, p + 0.5)).epsilon(1e-9));
    CHECK(indicator_expectation(set.right_velocity, p) == doctest::Approx(indicator_expectation(set.left_velocity, p + 0.5)).epsilon(1e-9));
    // Swing and stance coefficients are near complements of each other.
    CHECK(indicator_expectation(set.left_force, p) + indicator_expectation(set.left_velocity, p) == doctest::Approx(1.0).epsilon(0.1));
  }
}

TEST_CASE("indicator expectation agrees with sampled boundary shifts") {
  std::mt19937_64 gen(2024);
  oracle::VonMisesSampler vm(32.0);
  const PhaseIndicatorSpec s{IndicatorKind::left_force, 0.0, 0.5, 32.0};
  const int n = 100000;
  std::vector<double> x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(i)] = vm(gen) / (2.0 * std::numbers::pi);
    y[static_cast<std::size_t>(i)] = vm(gen) / (2.0 * std::numbers::pi);
  }
  for (double p : {0.0, 0.02, 0.05, 0.25, 0.48, 0.5, 0.53, 0.9}) {
    const double u = oracle::wrapped_offset(p, s.start, s.end);
    int hits = 0;
    for (int i = 0; i < n; ++i)
      hits += (-0.25 + x[static_cast<std::size_t>(i)] <= u && u < 0.25 + y[static_cast<std::size_t>(i)]) ? 1 : 0;
    CHECK(std::abs(indicator_expectation(s, p) - static_cast<double>(hits) / n) < 6e-3);
  }
}

TEST_CASE("default weights match the table") {
  const RewardWeights w;
  CHECK(w.left_force == 0.140);
  CHECK(w.forward_velocity == 0.140);
  CHECK(w.sideways_velocity == 0.078);
  CHECK(w.action_smoothness == 0.028);
  CHECK(w.torque == 0.028);
  CHECK(w.pelvis_motion == 0.028);
  CHECK(w.sum() == doctest::Approx(1.002).epsilon(1e-14));
  CHECK(w.force_scale == 0.01);
  CHECK(w.action_scale == 5.0);
  CHECK(w.torque_scale == 0.05);
  CHECK(w.pelvis_scale == 0.1);
  CHECK(w.orientation_body == 3.0);
  CHECK(w.orientation_feet == 10.0);
  RewardWeights bad;
  bad.torque = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("orientation error: reference values") {
  const Quat id{1, 0, 0, 0};
  CHECK(orientation_error(id, id, id, id) == 0.0);
  const Quat anti{-1, 0, 0, 0};
  CHECK(orientation_error(id, id, anti, id) == doctest::Approx(40.0));
  const Quat body{std::cos(0.1), 0, std::sin(0.1), 0};
  const double expect = 3.0 * std::pow(1.0 - std::cos(0.1), 2);
  CHECK(orientation_error(id, body, id, id) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(7.49e-5).epsilon(1e-3));
  CHECK_THROWS_AS((void)orientation_error(id, {2, 0, 0, 0}, id, id), NumericalError);
}

TEST_CASE("orientation error agrees with quaternion-algebra evaluation") {
  std::mt19937_64 g(8);
  for (int i = 0; i < 100; ++i) {
    const Quat t = random_unit(g), b = random_unit(g), l = random_unit(g), r = random_unit(g);
    auto eq = [](const Quat& q) { return Eigen::Quaterniond(q[0], q[1], q[2], q[3]); };
    const double db = eq(t).dot(eq(b)), dl = eq(t).dot(eq(l)), dr = eq(t).dot(eq(r));
    const double expect = 3.0 * (1.0 - db) * (1.0 - db) + 10.0 * ((1.0 - dl) * (1.0 - dl) + (1.0 - dr) * (1.0 - dr));
    CHECK(orientation_error(t, b, l, r) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("perfect state with every indicator active earns the full reward") {
  IndicatorSet all;
  all.left_velocity = all.left_force;
  all.right_force = all.left_force;
  all.right_velocity = all.left_force;
  const RewardBreakdown r = reward(neutral_inputs(), 0.25, RewardWeights{}, all);
  for (double c : r.cost) CHECK(c == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
  CHECK(r.reward == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("saturated terms give the weight-sum floor") {
  RewardInputs in = neutral_inputs();
  in.left_force = in.right_force = 1e6;
  in.left_foot_speed = in.right_foot_speed = 1e6;
  in.body_orientation = in.left_foot_orientation = in.right_foot_orientation = {-1, 0, 0, 0};
  in.forward_speed_desired = 1e6;
  in.sideways_speed_desired = -1e6;
  in.action = Eigen::VectorXd::Constant(7, 1e6);
  in.torque = Eigen::VectorXd::Constant(6, 1e6);
  in.pelvis_rotation = in.pelvis_acceleration = 1e6;
  const RewardBreakdown r = reward(in, 0.3);
  for (double c : r.cost) CHECK(c == 1.0);
  CHECK(r.reward == doctest::Approx(-0.002).epsilon(1e-12));
}

TEST_CASE("reward is non-increasing in each penalized magnitude") {
  for (double phase : {0.1, 0.6}) {
    double prev = 2.0;
    for (double f = 0.0; f < 500.0; f += 25.0) {
      RewardInputs in = neutral_inputs();
      in.left_force = f;
      const double r = reward(in, phase).reward;
      CHECK(r <= prev + 1e-15);
      prev = r;
    }
    prev = 2.0;
    for (double a = 0.0; a < 2.0; a += 0.1) {
      RewardInputs in = neutral_inputs();
      in.action[2] = a;
      in.pelvis_acceleration = a;
      const double r = reward(in, phase).reward;
      CHECK(r <= prev + 1e-15);
      prev = r;
    }
  }
}

TEST_CASE("breakdown weights sum to the penalty") {
  RewardInputs in = neutral_inputs();
  in.left_force = 100.0;
  in.forward_speed_desired = 0.7;
  in.torque[1] = 30.0;
  const RewardBreakdown r = reward(in, 0.4);
  double s = 0.0;
  for (double w : r.weighted) s += w;
  CHECK(s == doctest::Approx(r.penalty).epsilon(1e-14));
  CHECK(r.reward == doctest::Approx(1.0 - r.penalty).epsilon(1e-14));
  CHECK(kRewardTermNames[0] == "left_force");
  CHECK(kRewardTermNames[9] == "pelvis_motion");
}

TEST_CASE("non-finite or invalid reward inputs are rejected") {
  RewardInputs in = neutral_inputs();
  in.left_force = std::nan("");
  CHECK_THROWS_AS((void)reward(in, 0.1), NumericalError);
  in = neutral_inputs();
  in.torque[0] = INFINITY;
  CHECK_THROWS_AS((void)reward(in, 0.1), NumericalError);
  in = neutral_inputs();
  in.previous_action = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS((void)reward(in, 0.1), ShapeError);
}

}  // TEST_SUITE
