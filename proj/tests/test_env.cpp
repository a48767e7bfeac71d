#include <cmath>
#include <random>

#include "doctest.h"
#include "mirror_support.hpp"
#include "stairwalk/env.hpp"
#include "support.hpp"

using namespace stairwalk;
using namespace stairwalk::env;

namespace {

EpisodeConfig flat_config() {
  EpisodeConfig c;
  c.variant = Variant::flat_ground;
  c.terrain.incline = {0.0, 0.0};
  c.dynamics.enabled = false;
  c.fixed_command = Command{};
  return c;
}

Eigen::VectorXd zero_action() { return Eigen::VectorXd::Zero(kActionSize); }

}  // namespace

TEST_SUITE("env") {

TEST_CASE("variant names round trip") {
  for (Variant v : {Variant::flat_ground, Variant::stair, Variant::proximity}) CHECK(variant_from_string(to_string(v)) == v);
  CHECK_THROWS_AS((void)variant_from_string("hover"), ConfigError);
}

TEST_CASE("observation layout sizes and checksum") {
  CHECK(ObsLayout{false}.size() == 24);
  CHECK(ObsLayout{true}.size() == 25);
  CHECK(ObsLayout{false}.checksum() != ObsLayout{true}.checksum());
  CHECK(ObsLayout{false}.checksum() == ObsLayout{false}.checksum());
}

TEST_CASE("flat-ground reset has no risers, proximity adds one input") {
  EpisodeConfig c;
  c.variant = Variant::flat_ground;
  Env flat(c);
  for (std::uint64_t s = 0; s < 20; ++s) {
    (void)flat.reset(s);
    CHECK(flat.terrain().riser_positions().empty());
  }
  c.variant = Variant::proximity;
  Env prox(c);
  CHECK(prox.reset(3).size() == 25);
  c.variant = Variant::stair;
  Env stair(c);
  CHECK(stair.reset(3).size() == 24);
}

TEST_CASE("reset is deterministic and starts at phase zero") {
  EpisodeConfig c;
  Env a(c), b(c);
  const Eigen::VectorXd oa = a.reset(42), ob = b.reset(42);
  CHECK(oa == ob);
  CHECK(a.phase() == 0.0);
  CHECK(oa[ObsLayout::kClock] == doctest::Approx(0.0));
  CHECK(oa.allFinite());
  for (int i = 0; i < 20; ++i) {
    const auto ra = a.step(zero_action());
    const auto rb = b.step(zero_action());
    CHECK(ra.observation == rb.observation);
    CHECK(ra.reward == rb.reward);
  }
  CHECK(a.reset(43) != oa);
}

TEST_CASE("initial command is within the table ranges") {
  EpisodeConfig c;
  Env e(c);
  for (std::uint64_t s = 0; s < 200; ++s) {
    (void)e.reset(s);
    CHECK(c.commands.forward.contains(e.command().forward));
    CHECK(c.commands.sideways.contains(e.command().sideways));
    CHECK(c.commands.turn.contains(e.command().turn));
  }
}

TEST_CASE("standing still for the whole horizon ends with reason horizon") {
  Env e(flat_config());
  (void)e.reset(0);
  StepResult r;
  int n = 0;
  while (!e.done()) {
    r = e.step(zero_action());
    ++n;
    CHECK(r.reward >= -0.002);
    CHECK(r.reward <= 1.0);
  }
  CHECK(n == 300);
  CHECK(r.info.termination == Termination::horizon);
  CHECK(e.termination() == Termination::horizon);
  CHECK_THROWS_AS((void)e.step(zero_action()), Error);
}

TEST_CASE("falls are detected") {
  EpisodeConfig c = flat_config();
  c.joint_jitter = 0.0;
  c.fall_height_ratio = 0.9999;
  Env low(c);
  (void)low.reset(0);
  Eigen::VectorXd crouch = zero_action();
  crouch[1] = crouch[4] = 1.0;  // bend both knees fully
  StepResult r;
  for (int i = 0; i < 40 && !low.done(); ++i) r = low.step(crouch);
  CHECK(r.info.termination == Termination::fall);

  c = flat_config();
  c.fall_pitch = 1e-6;
  Env tilt(c);
  (void)tilt.reset(0);
  r = tilt.step(zero_action());
  CHECK(r.done);
  CHECK(r.info.termination == Termination::fall);
}

TEST_CASE("bad actions are rejected") {
  Env e(flat_config());
  (void)e.reset(0);
  CHECK_THROWS_AS((void)e.step(Eigen::VectorXd::Zero(6)), ShapeError);
  Eigen::VectorXd a = zero_action();
  a[2] = std::nan("");
  CHECK_THROWS_AS((void)e.step(a), NumericalError);
  Env fresh(flat_config());
  CHECK_THROWS_AS((void)fresh.step(zero_action()), Error);
}

TEST_CASE("action mapping: PD targets and the phase increment band") {
  Env e(flat_config());
  const auto m = sim::BipedModel::default_model();
  Eigen::VectorXd a = zero_action();
  CHECK(e.pd_targets(a) == m.nominal_pose());
  a.setConstant(5.0);
  const sim::Vec6 t = e.pd_targets(a);
  for (int i = 0; i < 6; ++i) CHECK(t[i] == doctest::Approx(m.joint(i).nominal + m.joint(i).action_scale));
  const double nominal = 0.025 / 0.7;
  CHECK(e.phase_delta(0.0) == doctest::Approx(nominal));
  CHECK(e.phase_delta(-1.0) == doctest::Approx(0.5 * nominal));
  CHECK(e.phase_delta(1.0) == doctest::Approx(1.5 * nominal));
  CHECK(e.phase_delta(7.0) == doctest::Approx(1.5 * nominal));
}

TEST_CASE("command schedule redraws each field with probability 1/300") {
  const CommandSchedule sched;
  Rng rng(5);
  std::array<long, 3> counts{};
  const int episodes = 2000;
  for (int ep = 0; ep < episodes; ++ep) {
    Command c = sched.sample(rng);
    for (int t = 0; t < 300; ++t) {
      const Command before = c;
      const auto flags = sched.step(rng, c);
      for (int f = 0; f < 3; ++f) counts[static_cast<std::size_t>(f)] += flags[static_cast<std::size_t>(f)] ? 1 : 0;
      if (!flags[0]) CHECK_EQ(c.forward, before.forward);
      CHECK(sched.ranges.forward.contains(c.forward));
    }
  }
  for (long n : counts) CHECK(static_cast<double>(n) / episodes == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("env resample counters agree with the step flags") {
  EpisodeConfig c;
  c.variant = Variant::flat_ground;
  c.commands.resample_probability = 0.2;
  Env e(c);
  (void)e.reset(1);
  std::array<int, 3> seen{};
  for (int i = 0; i < 40 && !e.done(); ++i) {
    const Command before = e.command();
    const auto r = e.step(zero_action());
    for (int f = 0; f < 3; ++f) seen[static_cast<std::size_t>(f)] += r.info.command_resampled[static_cast<std::size_t>(f)];
    if (!r.info.command_resampled[0]) CHECK(e.command().forward == before.forward);
    CHECK(r.observation[ObsLayout::kCommand] == e.command().forward);
  }
  CHECK(seen == e.resample_counts());
  CHECK(seen[0] + seen[1] + seen[2] > 0);
}

TEST_CASE("no resampling when disabled or when the command is fixed") {
  EpisodeConfig c;
  c.variant = Variant::flat_ground;
  c.commands.resample_probability = 0.5;
  c.resample_commands = false;
  Env off(c);
  (void)off.reset(2);
  for (int i = 0; i < 30 && !off.done(); ++i) (void)off.step(zero_action());
  CHECK(off.resample_counts() == std::array<int, 3>{0, 0, 0});

  c.resample_commands = true;
  c.fixed_command = Command{0.75, 0.0, 0.0};
  Env fixed(c);
  (void)fixed.reset(2);
  for (int i = 0; i < 30 && !fixed.done(); ++i) (void)fixed.step(zero_action());
  CHECK(fixed.resample_counts() == std::array<int, 3>{0, 0, 0});
  CHECK(fixed.command().forward == 0.75);
}

TEST_CASE("mirror maps are involutions with the expected fixed points") {
  for (bool prox : {false, true}) {
    const MirrorMaps m = MirrorMaps::for_layout(ObsLayout{prox});
    CHECK(m.observation.is_involution());
    CHECK(m.action.is_involution());
    std::mt19937_64 g(3);
    std::normal_distribution<double> n;
    for (int i = 0; i < 50; ++i) {
      Eigen::VectorXd o(ObsLayout{prox}.size());
      for (auto& v : o) v = n(g);
      CHECK((m.mirror_observation(m.mirror_observation(o)) - o).norm() == 0.0);
      Eigen::VectorXd a(kActionSize);
      for (auto& v : a) v = n(g);
      CHECK((m.mirror_action(m.mirror_action(a)) - a).norm() == 0.0);
    }
  }
  // A left/right symmetric stand with the clock at a half-cycle boundary is a fixed point.
  EpisodeConfig c = flat_config();
  c.joint_jitter = 0.0;
  Env e(c);
  const Eigen::VectorXd o = e.reset(0);
  CHECK((e.mirror().mirror_observation(o) - o).norm() < 1e-12);
  SignedPermutation broken{{1, 1}, {1.0, 1.0}};
  CHECK_FALSE(broken.is_involution());
}

TEST_CASE("mirrored torque sequences give mirrored trajectories") {
  const sim::Biped b(sim::BipedModel::default_model());
  const auto ground = terrain::make_incline(0.0);
  sim::Vec6 pose = b.model().nominal_pose();
  pose[0] += 0.1;
  pose[4] += 0.15;
  sim::SimState s = b.standing_state(ground, 0.0, pose);
  sim::SimState m = testing::mirror_state(s);
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  double worst = 0.0;
  for (int step = 0; step < 40; ++step) {
    sim::Vec6 target = b.model().nominal_pose();
    for (int i = 0; i < 6; ++i) target[i] += u(g);
    s = b.control_step(s, target, 40.0, ground).state;
    m = b.control_step(m, testing::mirror_joints(target), 40.0, ground).state;
    const sim::SimState back = testing::mirror_state(m);
    worst = std::max({worst, (back.q - s.q).cwiseAbs().maxCoeff(), (back.qd - s.qd).cwiseAbs().maxCoeff()});
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("episode config JSON round trip and validation") {
  EpisodeConfig c;
  c.variant = Variant::proximity;
  c.horizon = 123;
  c.commands.resample_probability = 0.01;
  const nlohmann::json j = c;
  const EpisodeConfig back = j.get<EpisodeConfig>();
  CHECK(nlohmann::json(back) == j);
  c.horizon = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CommandRanges r;
  r.forward = {1.0, 0.0};
  CHECK_THROWS_AS(r.validate(), ConfigError);
}

TEST_CASE("trajectory log JSONL round trip") {
  EpisodeConfig c = flat_config();
  c.horizon = 12;
  Env e(c);
  e.set_recording(true);
  (void)e.reset(4);
  while (!e.done()) (void)e.step(zero_action());
  const TrajectoryLog& log = e.log();
  CHECK(log.steps.size() == 12);
  CHECK(log.termination == "horizon");
  CHECK_FALSE(log.steps.front().energy.empty());
  testing::TempDir dir("trajlog");
  log.write_jsonl(dir.file("log.jsonl"));
  const TrajectoryLog back = TrajectoryLog::read_jsonl(dir.file("log.jsonl"));
  REQUIRE(back.steps.size() == log.steps.size());
  CHECK(back.total_mass == log.total_mass);
  CHECK(back.steps[5].q == log.steps[5].q);
  CHECK(back.steps[5].energy.size() == log.steps[5].energy.size());
  CHECK(back.steps[5].energy.back().torque == log.steps[5].energy.back().torque);
  testing::write_file(dir.file("bad.jsonl"), "{\"type\":\"header\"\n");
  CHECK_THROWS_AS((void)TrajectoryLog::read_jsonl(dir.file("bad.jsonl")), ParseError);
}

}  // TEST_SUITE
