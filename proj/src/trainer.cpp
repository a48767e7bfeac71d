#include "stairwalk/trainer.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace stairwalk::train {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::ordered_json IterationMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["iteration"] = iteration;
  j["steps"] = steps;
  j["episodes"] = episodes;
  j["mean_return"] = mean_return;
  j["mean_length"] = mean_length;
  j["falls"] = falls;
  j["kl"] = kl;
  j["epochs"] = epochs;
  j["policy_loss"] = policy_loss;
  j["value_loss"] = value_loss;
  j["mirror_loss"] = mirror_loss;
  j["clip_fraction"] = clip_fraction;
  j["kl_abort"] = kl_abort;
  j["rejected_kl"] = rejected_kl;
  j["nonfinite_abort"] = nonfinite_abort;
  j["mean_log_std"] = mean_log_std;
  j["buffer_hash"] = buffer_hash;
  return j;
}

IterationMetrics IterationMetrics::from_json(const json& j) {
  IterationMetrics m;
  try {
    m.iteration = j.at("iteration").get<int>();
    m.steps = j.at("steps").get<long long>();
    m.episodes = j.at("episodes").get<int>();
    m.mean_return = j.at("mean_return").get<double>();
    m.mean_length = j.at("mean_length").get<double>();
    m.falls = j.at("falls").get<double>();
    m.kl = j.at("kl").get<double>();
    m.epochs = j.at("epochs").get<int>();
    m.policy_loss = j.at("policy_loss").get<double>();
    m.value_loss = j.at("value_loss").get<double>();
    m.mirror_loss = j.at("mirror_loss").get<double>();
    m.clip_fraction = j.at("clip_fraction").get<double>();
    m.kl_abort = j.at("kl_abort").get<bool>();
    m.rejected_kl = j.at("rejected_kl").get<double>();
    m.nonfinite_abort = j.at("nonfinite_abort").get<bool>();
    m.mean_log_std = j.at("mean_log_std").get<double>();
    m.buffer_hash = j.at("buffer_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("metrics line: ") + e.what());
  }
  return m;
}

nnet::NetSpec policy_spec(nnet::Arch arch, const env::ObsLayout& layout) {
  nnet::NetSpec s = arch == nnet::Arch::lstm ? nnet::NetSpec::recurrent(layout.size(), env::kActionSize)
                                             : nnet::NetSpec::feedforward(layout.size(), env::kActionSize);
  // A small output layer keeps the first updates inside the KL threshold.
  s.head_gain = 0.1;
  return s;
}

nnet::NetSpec value_spec(nnet::Arch arch, const env::ObsLayout& layout) {
  nnet::NetSpec s = policy_spec(arch, layout);
  s.output = 1;
  return s;
}

ppo::EnvFactory make_env_factory(const env::EpisodeConfig& episode, const sim::BipedModel& model) {
  return [episode, model](int) { return env::Env(episode, model); };
}

namespace {

constexpr std::uint64_t kPolicyStream = 0x70;
constexpr std::uint64_t kValueStream = 0x76;
constexpr std::uint64_t kCollectStream = 1;
constexpr std::uint64_t kUpdateStream = 2;

void store_adam(nnet::Checkpoint& c, const nnet::Adam& a, const std::string& prefix) {
  for (std::size_t i = 0; i < a.first_moments().size(); ++i) {
    c.put(prefix + ".m" + std::to_string(i), a.first_moments()[i]);
    c.put(prefix + ".v" + std::to_string(i), a.second_moments()[i]);
  }
  c.put(prefix + ".t", nnet::Mat::Constant(1, 1, static_cast<double>(a.steps())));
}

void restore_adam(const nnet::Checkpoint& c, nnet::Adam& a, const std::string& prefix) {
  a.first_moments().clear();
  a.second_moments().clear();
  for (std::size_t i = 0; c.has(prefix + ".m" + std::to_string(i)); ++i) {
    a.first_moments().push_back(c.get(prefix + ".m" + std::to_string(i)));
    a.second_moments().push_back(c.get(prefix + ".v" + std::to_string(i)));
  }
  a.set_steps(static_cast<long>(c.get(prefix + ".t")(0, 0)));
}

}  // namespace

Trainer::Trainer(RunConfig config) : config_(std::move(config)) {
  config_.ppo.validate();
  episode_ = config_.resolved_episode();
  episode_.validate();
  const auto exp = config_.resolved_experiment();
  const auto layout = episode_.layout();
  maps_ = env::MirrorMaps::for_layout(layout);
  policy_ = nnet::GaussianPolicy(policy_spec(exp.arch, layout), derive_seed(config_.seed, kPolicyStream),
                                 config_.ppo.initial_std);
  value_ = nnet::Net(value_spec(exp.arch, layout), derive_seed(config_.seed, kValueStream));
  nnet::AdamConfig ac;
  ac.lr = config_.ppo.lr;
  opt_ = {nnet::Adam(ac), nnet::Adam(ac)};
  factory_ = make_env_factory(episode_, config_.model);
  hash_ = config_hash(config_);
}

std::string Trainer::metrics_path() const { return (fs::path(config_.out_dir) / "metrics.jsonl").string(); }
std::string Trainer::checkpoint_path() const { return (fs::path(config_.out_dir) / "checkpoint.swc").string(); }

void Trainer::save(const std::string& path) const {
  nnet::Checkpoint c;
  c.config_hash = hash_;
  c.layout_checksum = episode_.layout().checksum();
  const auto exp = config_.resolved_experiment();
  nlohmann::ordered_json meta;
  meta["experiment"] = exp.name;
  meta["arch"] = nnet::to_string(exp.arch);
  meta["variant"] = env::to_string(episode_.variant);
  meta["input"] = policy_.net().spec().input;
  meta["output"] = policy_.net().spec().output;
  meta["hidden"] = policy_.net().spec().hidden;
  meta["layers"] = policy_.net().spec().layers;
  meta["iteration"] = iteration_;
  meta["steps"] = steps_;
  meta["seed"] = config_.seed;
  c.meta = meta.dump();
  c.store(policy_.net().params(), "policy.");
  c.put("policy.log_std", policy_.log_std().value);
  c.store(value_.params(), "value.");
  store_adam(c, opt_.policy, "adam.policy");
  store_adam(c, opt_.value, "adam.value");
  nnet::save_checkpoint(path, c);
}

void Trainer::load(const nnet::Checkpoint& c) {
  if (c.config_hash != hash_)
    throw ConfigError("checkpoint was written for config " + hex64(c.config_hash) + " but this run has config " +
                      hex64(hash_));
  nnet::require_layout(c, episode_.layout().checksum());
  c.restore(policy_.net().params(), "policy.");
  const auto& ls = c.get("policy.log_std");
  if (ls.rows() != policy_.log_std().value.rows() || ls.cols() != policy_.log_std().value.cols())
    throw LayoutMismatch("checkpoint log_std has the wrong shape");
  policy_.log_std().value = ls;
  c.restore(value_.params(), "value.");
  restore_adam(c, opt_.policy, "adam.policy");
  restore_adam(c, opt_.value, "adam.value");
  const json meta = json::parse(c.meta);
  iteration_ = meta.at("iteration").get<int>();
  steps_ = meta.at("steps").get<long long>();
}

bool Trainer::resume() {
  if (!fs::exists(checkpoint_path())) return false;
  load(nnet::load_checkpoint(checkpoint_path()));
  // Keep only the metrics lines the checkpoint accounts for.
  std::vector<std::string> kept;
  if (std::ifstream in(metrics_path()); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (json::parse(line).at("iteration").get<int>() < iteration_) kept.push_back(line);
    }
  }
  std::ofstream out(metrics_path(), std::ios::trunc);
  for (const auto& l : kept) out << l << '\n';
  return true;
}

IterationMetrics Trainer::iterate() {
  const auto& pc = config_.ppo;
  const auto it = static_cast<std::uint64_t>(iteration_);
  // Fresh buffer every iteration.
  ppo::RolloutBuffer buffer = ppo::collect(policy_, value_, factory_, pc.buffer_steps,
                                           derive_seed(config_.seed, it, kCollectStream), pc.workers, false,
                                           pc.value_scale());
  ppo::compute_gae(buffer, pc.gamma, pc.lambda, pc.normalize_advantages);
  const ppo::UpdateStats st =
      ppo::update(policy_, value_, opt_, buffer, pc, maps_, derive_seed(config_.seed, it, kUpdateStream));

  IterationMetrics m;
  m.iteration = iteration_;
  steps_ += buffer.steps();
  m.steps = steps_;
  m.episodes = static_cast<int>(buffer.episodes.size());
  m.mean_return = buffer.mean_return();
  m.mean_length = buffer.mean_length();
  int falls = 0;
  for (const auto& e : buffer.episodes) falls += e.termination == "fall" ? 1 : 0;
  m.falls = static_cast<double>(falls) / static_cast<double>(buffer.episodes.size());
  m.kl = st.kl;
  m.epochs = st.epochs_run;
  m.policy_loss = st.policy_loss;
  m.value_loss = st.value_loss;
  m.mirror_loss = st.mirror_loss;
  m.clip_fraction = st.clip_fraction;
  m.kl_abort = st.kl_abort;
  m.rejected_kl = st.rejected_kl;
  m.nonfinite_abort = st.nonfinite_abort;
  m.mean_log_std = policy_.log_std().value.mean();
  m.buffer_hash = hex64(buffer.hash());
  ++iteration_;

  fs::create_directories(config_.out_dir);
  std::ofstream out(metrics_path(), std::ios::app);
  out << m.to_json().dump() << '\n';
  if (!out) throw Error("cannot append to " + metrics_path());
  return m;
}

void Trainer::run(const std::function<void(const IterationMetrics&)>& on_iteration, int max_iterations) {
  fs::create_directories(config_.out_dir);
  {
    std::ofstream cfg(fs::path(config_.out_dir) / "config.json");
    cfg << resolved_json(config_).dump(2) << '\n';
  }
  int done = 0;
  while (steps_ < config_.ppo.total_steps && (max_iterations < 0 || done < max_iterations)) {
    const IterationMetrics m = iterate();
    ++done;
    if (on_iteration) on_iteration(m);
    if (m.nonfinite_abort) {
      save(checkpoint_path());
      throw NumericalError("non-finite loss in iteration " + std::to_string(m.iteration) + "; training stopped");
    }
    if (iteration_ % config_.ppo.checkpoint_every == 0) save(checkpoint_path());
  }
  save(checkpoint_path());
}

LoadedPolicy load_policy(const std::string& path, const env::ObsLayout& expected) {
  const nnet::Checkpoint c = nnet::load_checkpoint(path);
  nnet::require_layout(c, expected.checksum());
  LoadedPolicy out;
  try {
    out.meta = json::parse(c.meta);
    const auto arch = nnet::arch_from_string(out.meta.at("arch").get<std::string>());
    nnet::NetSpec spec = policy_spec(arch, expected);
    spec.hidden = out.meta.at("hidden").get<int>();
    spec.layers = out.meta.at("layers").get<int>();
    out.policy = nnet::GaussianPolicy(spec, 0);
    nnet::NetSpec vs = spec;
    vs.output = 1;
    out.value = nnet::Net(vs, 0);
  } catch (const json::exception& e) {
    throw ParseError("checkpoint '" + path + "' has unreadable metadata: " + e.what());
  }
  c.restore(out.policy.net().params(), "policy.");
  out.policy.log_std().value = c.get("policy.log_std");
  c.restore(out.value.params(), "value.");
  return out;
}

double evaluate_return(const nnet::GaussianPolicy& policy, const ppo::EnvFactory& make_env, int episodes,
                       std::uint64_t seed) {
  if (episodes <= 0) throw ConfigError("evaluate_return: episodes must be > 0");
  env::Env e = make_env(0);
  double total = 0.0;
  for (int k = 0; k < episodes; ++k) {
    Eigen::VectorXd obs = e.reset(derive_seed(seed, static_cast<std::uint64_t>(k), 0xe7a1));
    nnet::RecurrentState st = policy.net().initial_state(1);
    while (true) {
      const Eigen::VectorXd a = policy.net().forward(obs.transpose(), st).row(0).transpose();
      const env::StepResult r = e.step(a);
      total += r.reward;
      obs = r.observation;
      if (r.done) break;
    }
  }
  return total / episodes;
}

double random_policy_return(const ppo::EnvFactory& make_env, int n_steps, std::uint64_t seed) {
  if (n_steps <= 0) throw ConfigError("random_policy_return: n_steps must be > 0");
  env::Env e = make_env(0);
  Rng rng(derive_seed(seed, 0x4a4d));
  double total = 0.0;
  long long steps = 0;
  int episodes = 0;
  while (steps < n_steps) {
    e.reset(derive_seed(seed, static_cast<std::uint64_t>(episodes), 0x5eed));
    while (true) {
      Eigen::VectorXd a(env::kActionSize);
      for (int i = 0; i < a.size(); ++i) a[i] = uniform(rng, -1.0, 1.0);
      const env::StepResult r = e.step(a);
      total += r.reward;
      ++steps;
      if (r.done) break;
    }
    ++episodes;
  }
  return total / episodes;
}

}  // namespace stairwalk::train
