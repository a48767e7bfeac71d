#include "stairwalk/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

namespace stairwalk {

using nlohmann::json;

namespace {

std::string type_name(const json& j) {
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  return j.type_name();
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Structural check of `given` against a document of defaults: unknown keys
// and type mismatches are reported with their full path before any value is
// interpreted.
void check_shape(const json& given, const json& ref, const std::string& path) {
  if (ref.is_object()) {
    if (!given.is_object()) throw ConfigError(path + ": expected object, got " + type_name(given));
    for (auto it = given.begin(); it != given.end(); ++it) {
      if (!ref.contains(it.key())) throw ConfigError(join(path, it.key()) + ": unknown field");
      check_shape(it.value(), ref.at(it.key()), join(path, it.key()));
    }
    return;
  }
  if (ref.is_number_integer()) {
    if (!given.is_number_integer()) throw ConfigError(path + ": expected integer, got " + type_name(given));
  } else if (ref.is_number()) {
    if (!given.is_number()) throw ConfigError(path + ": expected number, got " + type_name(given));
  } else if (ref.is_boolean()) {
    if (!given.is_boolean()) throw ConfigError(path + ": expected boolean, got " + type_name(given));
  } else if (ref.is_string()) {
    if (!given.is_string()) throw ConfigError(path + ": expected string, got " + type_name(given));
  } else if (ref.is_array()) {
    if (!given.is_array()) throw ConfigError(path + ": expected array, got " + type_name(given));
    if (!ref.empty())
      for (std::size_t i = 0; i < given.size(); ++i)
        check_shape(given[i], ref[0], path + "[" + std::to_string(i) + "]");
  }
}

template <typename T>
T convert(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

env::EpisodeConfig RunConfig::resolved_episode() const {
  env::EpisodeConfig e = episode;
  e.variant = resolved_experiment().variant;
  return e;
}

RunConfig parse_run_config(const json& doc, const std::string& base_dir) {
  if (!doc.is_object()) throw ConfigError("run config: expected a JSON object");
  RunConfig c;
  for (const char* key : {"experiment", "seed"})
    if (!doc.contains(key)) throw ConfigError(std::string(key) + ": missing required field");

  static const std::set<std::string> known{"experiment", "seed", "ppo", "episode", "model", "out_dir"};
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!known.count(it.key())) throw ConfigError(it.key() + ": unknown field");

  if (!doc.at("experiment").is_string()) throw ConfigError("experiment: expected string");
  c.experiment = doc.at("experiment").get<std::string>();
  ppo::Experiment exp;
  try {
    exp = ppo::experiment_from_name(c.experiment);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  }

  // In-memory documents store small literals as signed integers, parsed files as unsigned.
  const json& seed = doc.at("seed");
  if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0))
    throw ConfigError("seed: expected non-negative integer");
  c.seed = doc.at("seed").get<std::uint64_t>();

  if (doc.contains("ppo")) {
    check_shape(doc.at("ppo"), json(ppo::PPOConfig{}), "ppo");
    c.ppo = convert<ppo::PPOConfig>(doc.at("ppo"), "ppo");
  }
  if (!doc.contains("ppo") || !doc.at("ppo").contains("workers"))
    c.ppo.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  if (doc.contains("episode")) {
    check_shape(doc.at("episode"), json(env::EpisodeConfig{}), "episode");
    c.episode = convert<env::EpisodeConfig>(doc.at("episode"), "episode");
    if (doc.at("episode").contains("variant") && c.episode.variant != exp.variant)
      throw ConfigError("episode.variant: '" + env::to_string(c.episode.variant) + "' conflicts with experiment '" +
                        c.experiment + "'");
  }
  c.episode.variant = exp.variant;

  if (doc.contains("model")) {
    const json& m = doc.at("model");
    if (m.is_string()) {
      std::filesystem::path p = m.get<std::string>();
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      c.model_path = p.lexically_normal().string();
      try {
        c.model = sim::BipedModel::load(c.model_path);
      } catch (const Error& e) {
        throw ConfigError(std::string("model: ") + e.what());
      }
    } else {
      check_shape(m, json(sim::BipedModel::default_model()), "model");
      c.model = convert<sim::BipedModel>(m, "model");
    }
  }

  if (doc.contains("out_dir")) {
    if (!doc.at("out_dir").is_string()) throw ConfigError("out_dir: expected string");
    c.out_dir = doc.at("out_dir").get<std::string>();
  } else {
    std::string slug;
    for (char ch : c.experiment) slug += ch == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    c.out_dir = "runs/" + slug + "_seed" + std::to_string(c.seed);
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("run config '" + path + "' is not valid JSON: " + e.what());
  }
  const auto parent = std::filesystem::path(path).parent_path();
  return parse_run_config(doc, parent.empty() ? "." : parent.string());
}

nlohmann::ordered_json resolved_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["experiment"] = c.experiment;
  j["seed"] = c.seed;
  j["ppo"] = nlohmann::ordered_json::parse(json(c.ppo).dump());
  j["episode"] = nlohmann::ordered_json::parse(json(c.resolved_episode()).dump());
  j["model"] = nlohmann::ordered_json::parse(json(c.model).dump());
  j["out_dir"] = c.out_dir;
  return j;
}

std::uint64_t config_hash(const RunConfig& c) {
  auto j = resolved_json(c);
  j.erase("out_dir");
  return fnv1a64(j.dump());
}

void apply_environment_overrides(RunConfig& c) {
  if (const char* dir = std::getenv("STAIRWALK_OUT_DIR"); dir && *dir) c.out_dir = dir;
  if (const char* w = std::getenv("STAIRWALK_WORKERS"); w && *w) {
    char* end = nullptr;
    const long n = std::strtol(w, &end, 10);
    if (*end != '\0' || n <= 0 || n > 1024) throw ConfigError("STAIRWALK_WORKERS: expected a positive integer");
    c.ppo.workers = static_cast<int>(n);
  }
}

}  // namespace stairwalk
