#include <cmath>
#include <random>

#include "doctest.h"
#include "mirror_support.hpp"
#include "oracles.hpp"
#include "stairwalk/ppo.hpp"
#include "stairwalk/trainer.hpp"

using namespace stairwalk;
using namespace stairwalk::ppo;

namespace {

env::EpisodeConfig small_episode() {
  env::EpisodeConfig c;
  c.variant = env::Variant::flat_ground;
  c.horizon = 300;
  return c;
}

EnvFactory factory(const env::EpisodeConfig& c = small_episode()) {
  return train::make_env_factory(c, sim::BipedModel::default_model());
}

nnet::NetSpec small_spec(int out) { return {nnet::Arch::lstm, 24, out, 16, 1, 0.1}; }

struct Fixture {
  nnet::GaussianPolicy policy{small_spec(7), 1};
  nnet::Net value{small_spec(1), 2};
  RolloutBuffer buffer;
  env::MirrorMaps maps = env::MirrorMaps::for_layout(env::ObsLayout{false});

  explicit Fixture(int steps = 600) {
    buffer = collect(policy, value, factory(), steps, 0, 1, false, 100.0);
    compute_gae(buffer, 0.99, 0.95, true);
  }
};

std::vector<double> random_vec(std::size_t n, std::mt19937_64& g) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

}  // namespace

TEST_SUITE("ppo") {

TEST_CASE("GAE matches the double-loop oracle") {
  std::mt19937_64 g(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = random_vec(10, g), v = random_vec(10, g);
    const double boot = trial % 2 ? 0.0 : 0.7;
    const auto got = compute_gae(r, v, boot, 0.99, 0.95);
    const auto want = oracle::gae_double_loop(r, v, boot, 0.99, 0.95);
    for (std::size_t t = 0; t < 10; ++t) {
      CHECK(std::abs(got.advantages[t] - want[t]) < 1e-12);
      CHECK(got.returns[t] == doctest::Approx(want[t] + v[t]).epsilon(1e-14));
    }
  }
}

TEST_CASE("GAE limiting cases") {
  std::mt19937_64 g(5);
  const auto r = random_vec(8, g), v = random_vec(8, g);
  const auto mc = compute_gae(r, v, 0.0, 1.0, 1.0);
  double future = 0.0;
  for (int t = 7; t >= 0; --t) {
    future += r[static_cast<std::size_t>(t)];
    CHECK(mc.advantages[static_cast<std::size_t>(t)] == doctest::Approx(future - v[static_cast<std::size_t>(t)]).epsilon(1e-12));
  }
  const auto td = compute_gae(r, v, 0.3, 0.9, 0.0);
  for (std::size_t t = 0; t < 8; ++t) {
    const double next = t + 1 < 8 ? v[t + 1] : 0.3;
    CHECK(td.advantages[t] == doctest::Approx(r[t] + 0.9 * next - v[t]).epsilon(1e-12));
  }
}

TEST_CASE("collection returns whole episodes and is reproducible") {
  nnet::GaussianPolicy pol(small_spec(7), 1);
  nnet::Net val(small_spec(1), 2);
  const RolloutBuffer a = collect(pol, val, factory(), 600, 9, 1);
  const RolloutBuffer b = collect(pol, val, factory(), 600, 9, 1);
  CHECK(a.steps() >= 600);
  CHECK(a.episodes.size() >= 2);
  CHECK(a.hash() == b.hash());
  CHECK(collect(pol, val, factory(), 600, 10, 1).hash() != a.hash());
  for (const auto& ep : a.episodes) {
    CHECK(ep.length() > 0);
    CHECK(ep.length() <= 300);
    CHECK(ep.obs.size() == ep.rewards.size());
    CHECK(ep.policy_start.h.size() == 1);
    for (double r : ep.rewards) {
      CHECK(r >= -0.002);
      CHECK(r <= 1.0);
    }
  }
  // Two workers split the same seeds differently but still merge deterministically.
  const RolloutBuffer w1 = collect(pol, val, factory(), 600, 9, 2);
  const RolloutBuffer w2 = collect(pol, val, factory(), 600, 9, 2);
  CHECK(w1.hash() == w2.hash());
}

TEST_CASE("advantages are normalized over the buffer") {
  Fixture f;
  double s = 0.0, ss = 0.0;
  long n = 0;
  for (const auto& ep : f.buffer.episodes)
    for (double a : ep.advantages) {
      s += a;
      ss += a * a;
      ++n;
    }
  CHECK(s / n == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
  CHECK(ss / n == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("tiny learning rate runs every epoch with near-zero KL") {
  Fixture f;
  PPOConfig c;
  c.lr = 1e-12;
  c.batch_trajectories = 2;
  Optimizers opt{nnet::Adam({1e-12}), nnet::Adam({1e-12})};
  const UpdateStats s = update(f.policy, f.value, opt, f.buffer, c, f.maps, 0);
  CHECK(s.epochs_run == 5);
  CHECK_FALSE(s.kl_abort);
  CHECK(s.kl < 1e-12);
}

TEST_CASE("threshold zero rolls back the first epoch") {
  Fixture f;
  const auto before = f.policy.net().params()[0].value;
  PPOConfig c;
  c.kl_threshold = 0.0;
  c.batch_trajectories = 2;
  Optimizers opt;
  const UpdateStats s = update(f.policy, f.value, opt, f.buffer, c, f.maps, 0);
  CHECK(s.epochs_run <= 1);
  CHECK(s.kl_abort);
  CHECK(s.rejected_kl > 0.0);
  CHECK(f.policy.net().params()[0].value == before);
  CHECK(buffer_kl(f.policy, f.buffer) == 0.0);
}

TEST_CASE("minibatch granularity also respects the threshold") {
  Fixture f;
  PPOConfig c;
  c.kl_granularity = KlGranularity::minibatch;
  c.kl_threshold = 1e-5;
  c.batch_trajectories = 1;
  Optimizers opt;
  const UpdateStats s = update(f.policy, f.value, opt, f.buffer, c, f.maps, 0);
  CHECK(buffer_kl(f.policy, f.buffer) <= 1e-5);
  CHECK(s.kl_abort);
}

TEST_CASE("accepted epochs lower the surrogate loss on a fixed buffer") {
  Fixture f(1200);
  PPOConfig c;
  c.batch_trajectories = 4;
  c.lr = 2e-4;
  Optimizers opt{nnet::Adam({2e-4}), nnet::Adam({2e-4})};
  const UpdateStats s = update(f.policy, f.value, opt, f.buffer, c, f.maps, 0);
  REQUIRE(s.surrogate_trace.size() >= 2);
  for (std::size_t i = 1; i < s.surrogate_trace.size(); ++i)
    CHECK(s.surrogate_trace[i] <= s.surrogate_trace[i - 1] + 1e-12);
  CHECK(s.kl <= c.kl_threshold);
  CHECK(s.surrogate_trace.back() == doctest::Approx(surrogate_loss(f.policy, f.buffer, c.clip)).epsilon(1e-12));
}

TEST_CASE("mirror loss: non-negative, symmetric in the batch, zero for symmetric nets") {
  const env::MirrorMaps maps = env::MirrorMaps::for_layout(env::ObsLayout{false});
  std::mt19937_64 g(7);
  std::normal_distribution<double> n;
  std::vector<std::vector<Eigen::VectorXd>> seqs(3), mirrored(3);
  for (std::size_t s = 0; s < 3; ++s)
    for (int t = 0; t < 5; ++t) {
      Eigen::VectorXd o(24);
      for (auto& v : o) v = n(g);
      seqs[s].push_back(o);
      mirrored[s].push_back(maps.mirror_observation(o));
    }
  for (nnet::Arch arch : {nnet::Arch::lstm, nnet::Arch::feedforward}) {
    nnet::GaussianPolicy pol(nnet::NetSpec{arch, 24, 7, 16, 2, 1.0}, 3);
    const double l = mirror_loss(pol, seqs, maps);
    CHECK(l > 0.0);
    CHECK(mirror_loss(pol, mirrored, maps) == doctest::Approx(l).epsilon(1e-12));
    testing::symmetrize(pol.net(), maps);
    CHECK(mirror_loss(pol, seqs, maps) < 1e-10);
  }
}

TEST_CASE("config JSON round trip and validation") {
  PPOConfig c;
  c.kl_granularity = KlGranularity::minibatch;
  c.buffer_steps = 1234;
  const nlohmann::json j = c;
  CHECK(nlohmann::json(j.get<PPOConfig>()) == j);
  CHECK(c.value_scale() == doctest::Approx(100.0));
  PPOConfig bad;
  bad.kl_threshold = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = PPOConfig{};
  bad.max_epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = PPOConfig{};
  bad.gamma = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("experiment names") {
  CHECK(experiment_names().size() == 4);
  for (const auto& name : experiment_names()) CHECK(experiment_from_name(name).name == name);
  CHECK(experiment_from_name("Stair FF").arch == nnet::Arch::feedforward);
  CHECK(experiment_from_name("Flat Ground LSTM").variant == env::Variant::flat_ground);
  CHECK(experiment_from_name("Proximity LSTM").variant == env::Variant::proximity);
  CHECK_THROWS_AS((void)experiment_from_name("Stair GRU"), ConfigError);
}

}  // TEST_SUITE
