#include <cmath>

#include "stairwalk/ppo.hpp"

namespace stairwalk::ppo {

void PPOConfig::validate() const {
  if (buffer_steps <= 0) throw ConfigError("ppo.buffer_steps must be > 0");
  if (batch_trajectories <= 0) throw ConfigError("ppo.batch_trajectories must be > 0");
  if (batch_timesteps <= 0) throw ConfigError("ppo.batch_timesteps must be > 0");
  if (max_epochs <= 0) throw ConfigError("ppo.max_epochs must be > 0");
  // A zero threshold is allowed: it rejects any update that moves the policy.
  if (!(kl_threshold >= 0.0)) throw ConfigError("ppo.kl_threshold must be >= 0");
  if (!(clip > 0.0)) throw ConfigError("ppo.clip must be > 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("ppo.lr must be > 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must be in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("ppo.lambda must be in [0, 1]");
  if (!(mirror_weight >= 0.0)) throw ConfigError("ppo.mirror_weight must be >= 0");
  if (!(value_coef > 0.0)) throw ConfigError("ppo.value_coef must be > 0");
  if (!(initial_std > 0.0)) throw ConfigError("ppo.initial_std must be > 0");
  if (total_steps <= 0) throw ConfigError("ppo.total_steps must be > 0");
  if (workers <= 0) throw ConfigError("ppo.workers must be > 0");
  if (checkpoint_every <= 0) throw ConfigError("ppo.checkpoint_every must be > 0");
}

void to_json(nlohmann::json& j, const PPOConfig& c) {
  j = nlohmann::json{{"buffer_steps", c.buffer_steps},
                     {"batch_trajectories", c.batch_trajectories},
                     {"batch_timesteps", c.batch_timesteps},
                     {"max_epochs", c.max_epochs},
                     {"kl_threshold", c.kl_threshold},
                     {"kl_granularity", c.kl_granularity == KlGranularity::epoch ? "epoch" : "minibatch"},
                     {"clip", c.clip},
                     {"lr", c.lr},
                     {"gamma", c.gamma},
                     {"lambda", c.lambda},
                     {"mirror_weight", c.mirror_weight},
                     {"value_coef", c.value_coef},
                     {"normalize_advantages", c.normalize_advantages},
                     {"initial_std", c.initial_std},
                     {"total_steps", c.total_steps},
                     {"workers", c.workers},
                     {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, PPOConfig& c) {
  if (!j.is_object()) throw ConfigError("ppo: expected an object");
  PPOConfig r;
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("ppo.") + key + ": wrong type");
    }
  };
  get("buffer_steps", r.buffer_steps);
  get("batch_trajectories", r.batch_trajectories);
  get("batch_timesteps", r.batch_timesteps);
  get("max_epochs", r.max_epochs);
  get("kl_threshold", r.kl_threshold);
  if (j.contains("kl_granularity")) {
    const auto g = j.at("kl_granularity").get<std::string>();
    if (g == "epoch")
      r.kl_granularity = KlGranularity::epoch;
    else if (g == "minibatch")
      r.kl_granularity = KlGranularity::minibatch;
    else
      throw ConfigError("ppo.kl_granularity: expected 'epoch' or 'minibatch', got '" + g + "'");
  }
  get("clip", r.clip);
  get("lr", r.lr);
  get("gamma", r.gamma);
  get("lambda", r.lambda);
  get("mirror_weight", r.mirror_weight);
  get("value_coef", r.value_coef);
  get("normalize_advantages", r.normalize_advantages);
  get("initial_std", r.initial_std);
  get("total_steps", r.total_steps);
  get("workers", r.workers);
  get("checkpoint_every", r.checkpoint_every);
  r.validate();
  c = r;
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"Stair LSTM", "Stair FF", "Flat Ground LSTM", "Proximity LSTM"};
  return names;
}

Experiment experiment_from_name(const std::string& name) {
  if (name == "Stair LSTM") return {name, nnet::Arch::lstm, env::Variant::stair};
  if (name == "Stair FF") return {name, nnet::Arch::feedforward, env::Variant::stair};
  if (name == "Flat Ground LSTM") return {name, nnet::Arch::lstm, env::Variant::flat_ground};
  if (name == "Proximity LSTM") return {name, nnet::Arch::lstm, env::Variant::proximity};
  throw ConfigError("unknown experiment '" + name +
                    "' (expected one of: Stair LSTM, Stair FF, Flat Ground LSTM, Proximity LSTM)");
}

}  // namespace stairwalk::ppo
