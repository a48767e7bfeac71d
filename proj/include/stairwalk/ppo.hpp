#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stairwalk/env.hpp"
#include "stairwalk/nnet/adam.hpp"
#include "stairwalk/nnet/gaussian.hpp"
#include "stairwalk/nnet/net.hpp"

namespace stairwalk::ppo {

enum class KlGranularity { epoch, minibatch };

struct PPOConfig {
  int buffer_steps = 50000;
  int batch_trajectories = 64;  // recurrent minibatch, whole episodes
  int batch_timesteps = 1024;   // feedforward minibatch
  int max_epochs = 5;
  double kl_threshold = 0.02;
  KlGranularity kl_granularity = KlGranularity::epoch;
  double clip = 0.2;
  double lr = 5e-4;
  double gamma = 0.99;
  double lambda = 0.95;
  double mirror_weight = 1.0;
  double value_coef = 0.5;
  bool normalize_advantages = true;
  double initial_std = 0.3;
  long long total_steps = 10'000'000;
  int workers = 1;
  int checkpoint_every = 10;  // iterations

  void validate() const;
  /// The value network predicts returns divided by this, 1 / (1 - gamma).
  /// Rewards are at most 1, so its targets stay of order one.
  [[nodiscard]] double value_scale() const { return gamma < 1.0 ? 1.0 / (1.0 - gamma) : 1.0; }
};

void to_json(nlohmann::json& j, const PPOConfig& c);
void from_json(const nlohmann::json& j, PPOConfig& c);

/// The four policy groups compared in the experiments.
struct Experiment {
  std::string name;
  nnet::Arch arch = nnet::Arch::lstm;
  env::Variant variant = env::Variant::stair;
};

/// Accepts "Stair LSTM", "Stair FF", "Flat Ground LSTM", "Proximity LSTM".
[[nodiscard]] Experiment experiment_from_name(const std::string& name);
[[nodiscard]] const std::vector<std::string>& experiment_names();

struct Episode {
  std::vector<Eigen::VectorXd> obs;
  std::vector<Eigen::VectorXd> actions;
  std::vector<Eigen::VectorXd> means;  // policy mean at collection time
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> returns;
  bool terminal = false;  // fell or diverged; no bootstrap
  double bootstrap = 0.0; // value of the final observation for time-limit ends
  std::string termination;
  nnet::RecurrentState policy_start;
  nnet::RecurrentState value_start;
  int worker = 0;
  std::uint64_t seed = 0;

  [[nodiscard]] int length() const { return static_cast<int>(rewards.size()); }
  [[nodiscard]] double total_reward() const;
};

struct RolloutBuffer {
  std::vector<Episode> episodes;
  Eigen::VectorXd log_std;  // policy log_std at collection time
  int capacity = 0;

  [[nodiscard]] long long steps() const;
  [[nodiscard]] double mean_return() const;
  [[nodiscard]] double mean_length() const;
  void clear();
  /// Hash over every stored number, for reproducibility checks.
  [[nodiscard]] std::uint64_t hash() const;
};

using EnvFactory = std::function<env::Env(int worker)>;

/// Runs whole episodes until at least `n_steps` timesteps are stored. Work is
/// split statically across `workers` threads and merged in worker order, so
/// the buffer depends only on the seeds. Value outputs are multiplied by
/// `value_scale`.
[[nodiscard]] RolloutBuffer collect(const nnet::GaussianPolicy& policy, const nnet::Net& value,
                                    const EnvFactory& make_env, int n_steps, std::uint64_t seed, int workers,
                                    bool deterministic = false, double value_scale = 1.0);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// GAE over one episode: delta_t = r_t + g V_{t+1} - V_t, with V_T = bootstrap.
[[nodiscard]] GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                                    double bootstrap, double gamma, double lambda);
/// Fills every episode's advantages/returns; optionally normalizes advantages over the buffer.
void compute_gae(RolloutBuffer& buffer, double gamma, double lambda, bool normalize);

/// Mean over samples of |mirror_action(pi(o)) - pi(mirror_observation(o))|^2
/// using action means. Each inner vector is one observation sequence.
[[nodiscard]] double mirror_loss(const nnet::GaussianPolicy& policy,
                                 const std::vector<std::vector<Eigen::VectorXd>>& sequences,
                                 const env::MirrorMaps& maps);

/// Mean exact KL(collection policy || current policy) over every buffered step.
[[nodiscard]] double buffer_kl(const nnet::GaussianPolicy& policy, const RolloutBuffer& buffer);

struct UpdateStats {
  int epochs_run = 0;        // accepted epochs
  int minibatches = 0;       // accepted minibatch steps
  double kl = 0.0;           // mean KL after the accepted updates
  double policy_loss = 0.0;  // clipped surrogate, last accepted minibatch mean
  double value_loss = 0.0;
  double mirror_loss = 0.0;
  double clip_fraction = 0.0;
  bool kl_abort = false;
  bool nonfinite_abort = false;
  double rejected_kl = 0.0;  // KL of the rolled-back update, if any
  std::vector<double> epoch_kl;
  /// Surrogate loss over the whole buffer before updating and after each accepted epoch.
  std::vector<double> surrogate_trace;
};

struct Optimizers {
  nnet::Adam policy;
  nnet::Adam value;
};

/// Clipped-surrogate + mirror update of the policy and regression of the value
/// net. When the buffer KL exceeds the threshold the offending epoch (or
/// minibatch) is rolled back and the update stops.
UpdateStats update(nnet::GaussianPolicy& policy, nnet::Net& value, Optimizers& opt, const RolloutBuffer& buffer,
                   const PPOConfig& config, const env::MirrorMaps& maps, std::uint64_t seed);

/// Clipped surrogate objective (as a loss) of the current policy over the buffer.
[[nodiscard]] double surrogate_loss(const nnet::GaussianPolicy& policy, const RolloutBuffer& buffer, double clip);

}  // namespace stairwalk::ppo
