#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "stairwalk/env.hpp"
#include "stairwalk/ppo.hpp"
#include "stairwalk/simworld.hpp"

namespace stairwalk {

/// Everything needed to reproduce one training run.
struct RunConfig {
  std::string experiment = "Flat Ground LSTM";
  std::uint64_t seed = 0;
  ppo::PPOConfig ppo;
  env::EpisodeConfig episode;  // variant is taken from the experiment
  std::string model_path;      // empty: built-in model
  sim::BipedModel model = sim::BipedModel::default_model();
  std::string out_dir = "runs/default";

  [[nodiscard]] ppo::Experiment resolved_experiment() const { return ppo::experiment_from_name(experiment); }
  [[nodiscard]] env::EpisodeConfig resolved_episode() const;
};

/// Checks the document against the schema and builds a config. Every
/// violation is reported as a ConfigError naming the offending field path,
/// e.g. "ppo.lr: expected number, got string". Relative `model` paths are
/// resolved against `base_dir`.
[[nodiscard]] RunConfig parse_run_config(const nlohmann::json& doc, const std::string& base_dir = ".");
[[nodiscard]] RunConfig load_run_config(const std::string& path);

/// Fully materialized config (defaults filled in, model inlined).
[[nodiscard]] nlohmann::ordered_json resolved_json(const RunConfig& c);

/// Hash of the resolved config without the output directory, so a run can be
/// moved and still resume.
[[nodiscard]] std::uint64_t config_hash(const RunConfig& c);

/// Applies STAIRWALK_OUT_DIR and STAIRWALK_WORKERS when they are set.
void apply_environment_overrides(RunConfig& c);

}  // namespace stairwalk
