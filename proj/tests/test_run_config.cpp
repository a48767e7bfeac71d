#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "stairwalk/run_config.hpp"
#include "stairwalk/trainer.hpp"
#include "support.hpp"

using namespace stairwalk;
using nlohmann::json;

namespace {

std::string config_error(const json& doc) {
  try {
    (void)parse_run_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

RunConfig tiny_run(const std::string& dir) {
  RunConfig c = parse_run_config(json{{"experiment", "Flat Ground LSTM"}, {"seed", 3}, {"out_dir", dir}});
  c.ppo.buffer_steps = 300;
  c.ppo.batch_trajectories = 2;
  c.ppo.total_steps = 100000;
  c.ppo.workers = 1;
  c.ppo.checkpoint_every = 1;
  return c;
}

std::vector<std::string> lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

}  // namespace

TEST_SUITE("run_config") {

TEST_CASE("minimal config fills defaults") {
  const RunConfig c = parse_run_config(json{{"experiment", "Stair LSTM"}, {"seed", 7}});
  CHECK(c.resolved_experiment().variant == env::Variant::stair);
  CHECK(c.ppo.buffer_steps == 50000);
  CHECK(c.ppo.lr == 5e-4);
  CHECK(c.out_dir == "runs/stair_lstm_seed7");
  CHECK(c.ppo.workers >= 1);
  const auto r = resolved_json(c);
  CHECK(r.at("episode").at("variant") == "stair");
  CHECK(r.at("model").is_object());
  // The resolved document parses back to the same configuration.
  CHECK(config_hash(parse_run_config(json::parse(r.dump()))) == config_hash(c));
}

TEST_CASE("schema violations name the field") {
  CHECK(config_error(json{{"seed", 1}}) == "experiment: missing required field");
  CHECK(config_error(json{{"experiment", "Stair LSTM"}}) == "seed: missing required field");
  CHECK(config_error(json{{"experiment", "Stair LSTM"}, {"seed", 1}, {"ppo", {{"lr", "fast"}}}}) ==
        "ppo.lr: expected number, got string");
  CHECK(config_error(json{{"experiment", "Stair LSTM"}, {"seed", 1}, {"ppo", {{"bogus", 1}}}}) == "ppo.bogus: unknown field");
  CHECK(config_error(json{{"experiment", "Stair LSTM"}, {"seed", 1}, {"colour", "red"}}) == "colour: unknown field");
  CHECK(config_error(json{{"experiment", "Stair LSTM"}, {"seed", 1}, {"episode", {{"terrain", {{"rise", {0.3, 0.1}}}}}}})
            .rfind("episode", 0) == 0);
  CHECK(config_error(json{{"experiment", "Stair LSTM"}, {"seed", -1}}) == "seed: expected non-negative integer");
  CHECK(config_error(json{{"experiment", "Walker"}, {"seed", 1}}).rfind("experiment: ", 0) == 0);
  CHECK(config_error(json{{"experiment", "Stair LSTM"}, {"seed", 1}, {"episode", {{"variant", "flat_ground"}}}})
            .find("conflicts") != std::string::npos);
  CHECK(config_error(json{{"experiment", "Stair LSTM"}, {"seed", 1}, {"ppo", {{"max_epochs", 0}}}}).rfind("ppo", 0) == 0);
}

TEST_CASE("model paths resolve relative to the config file") {
  testing::TempDir dir("runcfg_model");
  testing::write_file(dir.file("model.json"), json(sim::BipedModel::default_model()).dump());
  testing::write_file(dir.file("run.json"), R"({"experiment": "Stair FF", "seed": 2, "model": "model.json"})");
  const RunConfig c = load_run_config(dir.file("run.json"));
  CHECK(c.model_path == dir.file("model.json"));
  testing::write_file(dir.file("broken.json"), "{\"experiment\": ");
  CHECK_THROWS_AS((void)load_run_config(dir.file("broken.json")), ConfigError);
  CHECK_THROWS_AS((void)load_run_config(dir.file("absent.json")), ConfigError);
  testing::write_file(dir.file("badmodel.json"), R"({"experiment": "Stair FF", "seed": 2, "model": "nope.json"})");
  CHECK_THROWS_AS((void)load_run_config(dir.file("badmodel.json")), ConfigError);
}

TEST_CASE("hash ignores the output directory") {
  RunConfig a = parse_run_config(json{{"experiment", "Stair LSTM"}, {"seed", 1}, {"out_dir", "x"}});
  RunConfig b = parse_run_config(json{{"experiment", "Stair LSTM"}, {"seed", 1}, {"out_dir", "y"}});
  a.ppo.workers = b.ppo.workers = 1;
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 2;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("environment overrides") {
  RunConfig c = parse_run_config(json{{"experiment", "Stair LSTM"}, {"seed", 1}});
  setenv("STAIRWALK_OUT_DIR", "/tmp/elsewhere", 1);
  setenv("STAIRWALK_WORKERS", "3", 1);
  apply_environment_overrides(c);
  CHECK(c.out_dir == "/tmp/elsewhere");
  CHECK(c.ppo.workers == 3);
  setenv("STAIRWALK_WORKERS", "many", 1);
  CHECK_THROWS_AS(apply_environment_overrides(c), ConfigError);
  unsetenv("STAIRWALK_OUT_DIR");
  unsetenv("STAIRWALK_WORKERS");
}

}  // TEST_SUITE

TEST_SUITE("train") {

TEST_CASE("policy and value specs") {
  const auto p = train::policy_spec(nnet::Arch::lstm, env::ObsLayout{true});
  CHECK(p.input == 25);
  CHECK(p.output == 7);
  CHECK(p.hidden == 128);
  const auto v = train::value_spec(nnet::Arch::feedforward, env::ObsLayout{false});
  CHECK(v.output == 1);
  CHECK(v.hidden == 300);
}

TEST_CASE("metrics line round trip") {
  train::IterationMetrics m;
  m.iteration = 4;
  m.steps = 1234;
  m.kl = 0.0125;
  m.buffer_hash = "00ff";
  const auto j = m.to_json();
  CHECK(j.at("iteration") == 4);
  CHECK_FALSE(j.contains("seconds"));
  CHECK(train::IterationMetrics::from_json(json::parse(j.dump())).to_json() == j);
}

TEST_CASE("resumed training reproduces an uninterrupted run") {
  testing::TempDir straight("train_straight"), split("train_split");
  {
    train::Trainer t(tiny_run(straight.str()));
    t.run({}, 3);
  }
  {
    train::Trainer t(tiny_run(split.str()));
    t.run({}, 2);
  }
  {
    train::Trainer t(tiny_run(split.str()));
    CHECK(t.resume());
    CHECK(t.iteration() == 2);
    t.run({}, 1);
  }
  const auto a = lines(straight.file("metrics.jsonl"));
  const auto b = lines(split.file("metrics.jsonl"));
  CHECK(a.size() == 3);
  CHECK(a == b);
  CHECK(testing::read_file(straight.file("checkpoint.swc")) == testing::read_file(split.file("checkpoint.swc")));
  CHECK(json::parse(testing::read_file(straight.file("config.json"))).at("seed") == 3);

  RunConfig other = tiny_run(split.str());
  other.seed = 4;
  train::Trainer t(other);
  CHECK_THROWS_AS(t.resume(), ConfigError);

  CHECK_NOTHROW((void)train::load_policy(straight.file("checkpoint.swc"), env::ObsLayout{false}));
  CHECK_THROWS_AS((void)train::load_policy(straight.file("checkpoint.swc"), env::ObsLayout{true}), LayoutMismatch);
}

}  // TEST_SUITE
