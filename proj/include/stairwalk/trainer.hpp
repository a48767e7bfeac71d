#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "json.hpp"
#include "stairwalk/nnet/checkpoint.hpp"
#include "stairwalk/ppo.hpp"
#include "stairwalk/run_config.hpp"

namespace stairwalk::train {

/// One metrics line. Wall-clock timings are deliberately absent so that two
/// runs with the same config produce byte-identical streams.
struct IterationMetrics {
  int iteration = 0;
  long long steps = 0;  // cumulative environment steps after this iteration
  int episodes = 0;
  double mean_return = 0.0;
  double mean_length = 0.0;
  double falls = 0.0;  // fraction of episodes ending in a fall
  double kl = 0.0;
  int epochs = 0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mirror_loss = 0.0;
  double clip_fraction = 0.0;
  bool kl_abort = false;
  double rejected_kl = 0.0;
  bool nonfinite_abort = false;
  double mean_log_std = 0.0;
  std::string buffer_hash;

  [[nodiscard]] nlohmann::ordered_json to_json() const;
  [[nodiscard]] static IterationMetrics from_json(const nlohmann::json& j);
};

[[nodiscard]] nnet::NetSpec policy_spec(nnet::Arch arch, const env::ObsLayout& layout);
[[nodiscard]] nnet::NetSpec value_spec(nnet::Arch arch, const env::ObsLayout& layout);

/// Environment factory used for training: every worker gets an identical env.
[[nodiscard]] ppo::EnvFactory make_env_factory(const env::EpisodeConfig& episode, const sim::BipedModel& model);

/// Collect -> advantages -> update loop writing `metrics.jsonl`,
/// `checkpoint.swc` and `config.json` into the run directory.
class Trainer {
 public:
  explicit Trainer(RunConfig config);

  /// Loads `checkpoint.swc` from the run directory when present. A checkpoint
  /// written for a different config is rejected with ConfigError. Metrics
  /// lines past the checkpoint are discarded so the stream stays consistent.
  bool resume();

  /// Runs one iteration and appends its metrics line.
  IterationMetrics iterate();

  /// Iterates until the step budget is used (or `max_iterations` more
  /// iterations ran), checkpointing periodically and at the end.
  void run(const std::function<void(const IterationMetrics&)>& on_iteration = {}, int max_iterations = -1);

  void save(const std::string& path) const;
  void load(const nnet::Checkpoint& c);

  [[nodiscard]] const RunConfig& config() const { return config_; }
  [[nodiscard]] nnet::GaussianPolicy& policy() { return policy_; }
  [[nodiscard]] nnet::Net& value() { return value_; }
  [[nodiscard]] int iteration() const { return iteration_; }
  [[nodiscard]] long long steps() const { return steps_; }
  [[nodiscard]] std::string metrics_path() const;
  [[nodiscard]] std::string checkpoint_path() const;

 private:
  RunConfig config_;
  env::EpisodeConfig episode_;
  env::MirrorMaps maps_;
  nnet::GaussianPolicy policy_;
  nnet::Net value_;
  ppo::Optimizers opt_;
  ppo::EnvFactory factory_;
  std::uint64_t hash_ = 0;
  int iteration_ = 0;
  long long steps_ = 0;
};

/// Policy and value net restored from a training checkpoint.
struct LoadedPolicy {
  nnet::GaussianPolicy policy;
  nnet::Net value;
  nlohmann::json meta;
};

/// Throws LayoutMismatch when the checkpoint was trained on another observation layout.
[[nodiscard]] LoadedPolicy load_policy(const std::string& path, const env::ObsLayout& expected);

/// Mean undiscounted return of the deterministic (mean-action) policy over
/// `episodes` episodes with seeds derived from `seed`.
[[nodiscard]] double evaluate_return(const nnet::GaussianPolicy& policy, const ppo::EnvFactory& make_env, int episodes,
                                     std::uint64_t seed);

/// Mean undiscounted episode return of uniformly random actions in [-1, 1]
/// over whole episodes totalling at least `n_steps` steps.
[[nodiscard]] double random_policy_return(const ppo::EnvFactory& make_env, int n_steps, std::uint64_t seed);

}  // namespace stairwalk::train
