#include "stairwalk/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <numeric>
#include <thread>

namespace stairwalk::ppo {

using nnet::Mat;
using nnet::Var;

double Episode::total_reward() const { return std::accumulate(rewards.begin(), rewards.end(), 0.0); }

long long RolloutBuffer::steps() const {
  long long n = 0;
  for (const auto& e : episodes) n += e.length();
  return n;
}

double RolloutBuffer::mean_return() const {
  if (episodes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : episodes) s += e.total_reward();
  return s / static_cast<double>(episodes.size());
}

double RolloutBuffer::mean_length() const {
  if (episodes.empty()) return 0.0;
  return static_cast<double>(steps()) / static_cast<double>(episodes.size());
}

void RolloutBuffer::clear() {
  episodes.clear();
  log_std.resize(0);
}

std::uint64_t RolloutBuffer::hash() const {
  std::uint64_t h = fnv1a64("rollout");
  auto mix = [&](double v) { h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h); };
  auto mix_vec = [&](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) mix(v[i]);
  };
  for (const auto& e : episodes) {
    for (const auto& o : e.obs) mix_vec(o);
    for (const auto& a : e.actions) mix_vec(a);
    for (double v : e.log_probs) mix(v);
    for (double v : e.rewards) mix(v);
    for (double v : e.values) mix(v);
    mix(e.bootstrap);
    mix(e.terminal ? 1.0 : 0.0);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Collection

namespace {

struct WorkerOutput {
  std::vector<Episode> episodes;
  std::exception_ptr error;
};

Mat as_row(const Eigen::VectorXd& v) { return v.transpose(); }

void run_worker(const nnet::GaussianPolicy& policy, const nnet::Net& value, const EnvFactory& make_env, int worker,
                long long quota, std::uint64_t seed, bool deterministic, double value_scale, WorkerOutput& out) {
  try {
    env::Env e = make_env(worker);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(worker), 0xac7));
    const Eigen::VectorXd log_std = policy.log_std_vector();
    long long steps = 0;
    std::uint64_t index = 0;
    while (steps < quota) {
      Episode ep;
      ep.worker = worker;
      ep.seed = derive_seed(seed, static_cast<std::uint64_t>(worker), index++, 0x5eed);
      Eigen::VectorXd obs = e.reset(ep.seed);
      nnet::RecurrentState pst = policy.net().initial_state(1);
      nnet::RecurrentState vst = value.initial_state(1);
      ep.policy_start = pst;
      ep.value_start = vst;
      while (true) {
        const Eigen::VectorXd mean = policy.net().forward(as_row(obs), pst).row(0).transpose();
        const double v = value_scale * value.forward(as_row(obs), vst)(0, 0);
        nnet::GaussianSample s;
        if (deterministic) {
          s.action = mean;
          s.log_prob = nnet::log_prob(mean, log_std, mean);
        } else {
          s = nnet::sample_action(mean, log_std, rng);
        }
        const env::StepResult r = e.step(s.action);
        ep.obs.push_back(obs);
        ep.actions.push_back(s.action);
        ep.means.push_back(mean);
        ep.log_probs.push_back(s.log_prob);
        ep.rewards.push_back(r.reward);
        ep.values.push_back(v);
        obs = r.observation;
        if (r.done) {
          ep.termination = env::to_string(r.info.termination);
          ep.terminal = r.info.termination == env::Termination::fall ||
                        r.info.termination == env::Termination::instability;
          if (!ep.terminal) {
            nnet::RecurrentState tmp = vst;
            ep.bootstrap = value_scale * value.forward(as_row(obs), tmp)(0, 0);
          }
          break;
        }
      }
      steps += ep.length();
      out.episodes.push_back(std::move(ep));
    }
  } catch (...) {
    out.error = std::current_exception();
  }
}

}  // namespace

RolloutBuffer collect(const nnet::GaussianPolicy& policy, const nnet::Net& value, const EnvFactory& make_env,
                      int n_steps, std::uint64_t seed, int workers, bool deterministic, double value_scale) {
  if (n_steps <= 0) throw ConfigError("collect: n_steps must be > 0");
  if (workers <= 0) throw ConfigError("collect: workers must be > 0");
  const long long quota = (static_cast<long long>(n_steps) + workers - 1) / workers;
  std::vector<WorkerOutput> outs(static_cast<std::size_t>(workers));
  if (workers == 1) {
    run_worker(policy, value, make_env, 0, quota, seed, deterministic, value_scale, outs[0]);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w)
      threads.emplace_back(run_worker, std::cref(policy), std::cref(value), std::cref(make_env), w, quota, seed,
                           deterministic, value_scale, std::ref(outs[static_cast<std::size_t>(w)]));
    for (auto& t : threads) t.join();
  }
  RolloutBuffer buf;
  buf.capacity = n_steps;
  buf.log_std = policy.log_std_vector();
  for (auto& o : outs) {
    if (o.error) std::rethrow_exception(o.error);
    for (auto& ep : o.episodes) buf.episodes.push_back(std::move(ep));
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Advantages

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values, double bootstrap,
                      double gamma, double lambda) {
  if (rewards.size() != values.size()) throw ShapeError("gae: rewards and values differ in length");
  const std::size_t n = rewards.size();
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next = k + 1 < n ? values[k + 1] : bootstrap;
    const double delta = rewards[k] + gamma * next - values[k];
    running = delta + gamma * lambda * running;
    r.advantages[k] = running;
    r.returns[k] = running + values[k];
  }
  return r;
}

void compute_gae(RolloutBuffer& buffer, double gamma, double lambda, bool normalize) {
  double sum = 0.0, sq = 0.0;
  long long n = 0;
  for (auto& e : buffer.episodes) {
    GaeResult g = compute_gae(e.rewards, e.values, e.terminal ? 0.0 : e.bootstrap, gamma, lambda);
    e.advantages = std::move(g.advantages);
    e.returns = std::move(g.returns);
    for (double a : e.advantages) {
      sum += a;
      sq += a * a;
      ++n;
    }
  }
  if (!normalize || n < 2) return;
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
  const double inv = 1.0 / (std::sqrt(var) + 1e-8);
  for (auto& e : buffer.episodes)
    for (double& a : e.advantages) a = (a - mean) * inv;
}

// ---------------------------------------------------------------------------
// Batched sequence evaluation

namespace {

// Episodes ordered by decreasing length so the sequences still running at
// time t always occupy the leading rows.
std::vector<std::size_t> by_length(const std::vector<const Episode*>& eps) {
  std::vector<std::size_t> order(eps.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return eps[a]->length() > eps[b]->length(); });
  return order;
}

using ObsSelector = const Eigen::VectorXd& (*)(const Episode&, int);

// Inference over whole episodes; returns one (length x out) matrix per episode.
std::vector<Mat> run_sequences(const nnet::Net& net, const std::vector<const Episode*>& eps,
                               const env::SignedPermutation* mirror) {
  std::vector<Mat> out(eps.size());
  if (eps.empty()) return out;
  const auto order = by_length(eps);
  for (std::size_t i = 0; i < eps.size(); ++i) out[i].resize(eps[i]->length(), net.spec().output);
  const int t_max = eps[order[0]]->length();
  const auto rows_at = [&](int t) {
    Eigen::Index r = 0;
    while (r < static_cast<Eigen::Index>(order.size()) && eps[order[static_cast<std::size_t>(r)]]->length() > t) ++r;
    return r;
  };
  if (!net.recurrent()) {
    for (std::size_t i = 0; i < eps.size(); ++i) {
      Mat x(eps[i]->length(), net.spec().input);
      for (int t = 0; t < eps[i]->length(); ++t) {
        const auto& o = eps[i]->obs[static_cast<std::size_t>(t)];
        x.row(t) = (mirror ? mirror->apply(o) : o).transpose();
      }
      nnet::RecurrentState none;
      out[i] = net.forward(x, none);
    }
    return out;
  }
  nnet::RecurrentState st = net.initial_state(static_cast<Eigen::Index>(order.size()));
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Episode& e = *eps[order[r]];
    if (!e.policy_start.h.empty() && e.policy_start.h.size() == st.h.size() && !mirror) {
      for (std::size_t l = 0; l < st.h.size(); ++l) {
        st.h[l].row(static_cast<Eigen::Index>(r)) = e.policy_start.h[l].row(0);
        st.c[l].row(static_cast<Eigen::Index>(r)) = e.policy_start.c[l].row(0);
      }
    }
  }
  for (int t = 0; t < t_max; ++t) {
    const Eigen::Index rows = rows_at(t);
    for (std::size_t l = 0; l < st.h.size(); ++l) {
      if (st.h[l].rows() != rows) {
        st.h[l] = st.h[l].topRows(rows).eval();
        st.c[l] = st.c[l].topRows(rows).eval();
      }
    }
    Mat x(rows, net.spec().input);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& o = eps[order[static_cast<std::size_t>(r)]]->obs[static_cast<std::size_t>(t)];
      x.row(r) = (mirror ? mirror->apply(o) : o).transpose();
    }
    const Mat y = net.forward(x, st);
    for (Eigen::Index r = 0; r < rows; ++r) out[order[static_cast<std::size_t>(r)]].row(t) = y.row(r);
  }
  return out;
}

std::vector<const Episode*> all_episodes(const RolloutBuffer& b) {
  std::vector<const Episode*> v;
  for (const auto& e : b.episodes) v.push_back(&e);
  return v;
}

struct BufferEval {
  double kl = 0.0;
  double surrogate = 0.0;
};

BufferEval evaluate_buffer(const nnet::GaussianPolicy& policy, const RolloutBuffer& buffer, double clip) {
  const auto eps = all_episodes(buffer);
  const auto means = run_sequences(policy.net(), eps, nullptr);
  const Eigen::VectorXd ls = policy.log_std_vector();
  const Eigen::VectorXd old_ls = buffer.log_std.size() == ls.size() ? buffer.log_std : ls;
  BufferEval ev;
  long long n = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const Episode& e = *eps[i];
    for (int t = 0; t < e.length(); ++t) {
      const auto ts = static_cast<std::size_t>(t);
      const Eigen::VectorXd m = means[i].row(t).transpose();
      ev.kl += nnet::kl_divergence(e.means[ts], old_ls, m, ls);
      if (!e.advantages.empty()) {
        const double ratio = std::exp(nnet::log_prob(m, ls, e.actions[ts]) - e.log_probs[ts]);
        const double a = e.advantages[ts];
        ev.surrogate -= std::min(ratio * a, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * a);
      }
      ++n;
    }
  }
  if (n > 0) {
    ev.kl /= static_cast<double>(n);
    ev.surrogate /= static_cast<double>(n);
  }
  return ev;
}

// One minibatch laid out as time slices. Feedforward batches are a single
// slice; recurrent batches hold one slice per time step with rows shrinking
// as shorter episodes end.
struct Slice {
  Mat obs, obs_mirror, actions, old_lp, adv, ret;
};

struct Minibatch {
  std::vector<Slice> slices;
  nnet::RecurrentState policy_start;
  nnet::RecurrentState value_start;
  long long count = 0;
};

Minibatch recurrent_batch(const std::vector<const Episode*>& eps, const env::MirrorMaps& maps, int obs_dim,
                          int act_dim, const nnet::Net& pnet, const nnet::Net& vnet) {
  Minibatch mb;
  const auto order = by_length(eps);
  const int t_max = eps[order[0]]->length();
  const auto b = static_cast<Eigen::Index>(order.size());
  mb.policy_start = pnet.initial_state(b);
  mb.value_start = vnet.initial_state(b);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Episode& e = *eps[order[r]];
    for (std::size_t l = 0; l < mb.policy_start.h.size() && l < e.policy_start.h.size(); ++l) {
      mb.policy_start.h[l].row(static_cast<Eigen::Index>(r)) = e.policy_start.h[l].row(0);
      mb.policy_start.c[l].row(static_cast<Eigen::Index>(r)) = e.policy_start.c[l].row(0);
    }
    for (std::size_t l = 0; l < mb.value_start.h.size() && l < e.value_start.h.size(); ++l) {
      mb.value_start.h[l].row(static_cast<Eigen::Index>(r)) = e.value_start.h[l].row(0);
      mb.value_start.c[l].row(static_cast<Eigen::Index>(r)) = e.value_start.c[l].row(0);
    }
  }
  for (int t = 0; t < t_max; ++t) {
    Eigen::Index rows = 0;
    while (rows < b && eps[order[static_cast<std::size_t>(rows)]]->length() > t) ++rows;
    Slice s;
    s.obs.resize(rows, obs_dim);
    s.obs_mirror.resize(rows, obs_dim);
    s.actions.resize(rows, act_dim);
    s.old_lp.resize(rows, 1);
    s.adv.resize(rows, 1);
    s.ret.resize(rows, 1);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Episode& e = *eps[order[static_cast<std::size_t>(r)]];
      const auto ts = static_cast<std::size_t>(t);
      s.obs.row(r) = e.obs[ts].transpose();
      s.obs_mirror.row(r) = maps.mirror_observation(e.obs[ts]).transpose();
      s.actions.row(r) = e.actions[ts].transpose();
      s.old_lp(r, 0) = e.log_probs[ts];
      s.adv(r, 0) = e.advantages[ts];
      s.ret(r, 0) = e.returns[ts];
    }
    mb.count += rows;
    mb.slices.push_back(std::move(s));
  }
  return mb;
}

Minibatch flat_batch(const std::vector<std::pair<const Episode*, int>>& steps, const env::MirrorMaps& maps,
                     int obs_dim, int act_dim) {
  Minibatch mb;
  const auto rows = static_cast<Eigen::Index>(steps.size());
  Slice s;
  s.obs.resize(rows, obs_dim);
  s.obs_mirror.resize(rows, obs_dim);
  s.actions.resize(rows, act_dim);
  s.old_lp.resize(rows, 1);
  s.adv.resize(rows, 1);
  s.ret.resize(rows, 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Episode& e = *steps[static_cast<std::size_t>(r)].first;
    const auto ts = static_cast<std::size_t>(steps[static_cast<std::size_t>(r)].second);
    s.obs.row(r) = e.obs[ts].transpose();
    s.obs_mirror.row(r) = maps.mirror_observation(e.obs[ts]).transpose();
    s.actions.row(r) = e.actions[ts].transpose();
    s.old_lp(r, 0) = e.log_probs[ts];
    s.adv(r, 0) = e.advantages[ts];
    s.ret(r, 0) = e.returns[ts];
  }
  mb.count = rows;
  mb.slices.push_back(std::move(s));
  return mb;
}

nnet::VarState to_vars(nnet::Tape& tape, const nnet::RecurrentState& s) {
  nnet::VarState v;
  for (const auto& h : s.h) v.h.push_back(tape.constant(h));
  for (const auto& c : s.c) v.c.push_back(tape.constant(c));
  return v;
}

void shrink(nnet::VarState& st, Eigen::Index rows) {
  for (std::size_t l = 0; l < st.h.size(); ++l) {
    if (st.h[l].rows() != rows) {
      st.h[l] = nnet::top_rows(st.h[l], rows);
      st.c[l] = nnet::top_rows(st.c[l], rows);
    }
  }
}

Mat permutation_matrix(const env::SignedPermutation& p) {
  Mat m = Mat::Zero(p.size(), p.size());
  for (int i = 0; i < p.size(); ++i)
    m(p.perm[static_cast<std::size_t>(i)], i) = p.sign[static_cast<std::size_t>(i)];
  return m;
}

Var accumulate_sum(const Var& total, const Var& term) { return total.valid() ? total + term : term; }

struct PolicyStepResult {
  double surrogate = 0.0;
  double mirror = 0.0;
  double clip_fraction = 0.0;
  bool finite = true;
};

PolicyStepResult policy_step(nnet::GaussianPolicy& policy, nnet::Adam& opt, const Minibatch& mb,
                             const PPOConfig& cfg, const Mat& act_mirror) {
  policy.zero_grad();
  nnet::Tape tape;
  const auto bound = policy.net().bind(tape);
  const Var log_std = tape.param(policy.log_std());
  nnet::VarState st = to_vars(tape, mb.policy_start);
  nnet::VarState st_m = to_vars(tape, policy.net().initial_state(mb.policy_start.h.empty() ? 0 : mb.policy_start.h[0].rows()));
  const Var pmat = tape.constant(act_mirror);
  Var surr_total, mirror_total;
  long long clipped = 0;
  const bool use_mirror = cfg.mirror_weight > 0.0;
  for (const auto& s : mb.slices) {
    const Eigen::Index rows = s.obs.rows();
    shrink(st, rows);
    const Var mean = policy.net().forward(bound, tape.constant(s.obs), st);
    const Var lp = nnet::log_prob(mean, log_std, s.actions);
    const Var ratio = nnet::exp(lp - tape.constant(s.old_lp));
    const Var adv = tape.constant(s.adv);
    const Var surr = nnet::minimum(ratio * adv, nnet::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv);
    surr_total = accumulate_sum(surr_total, nnet::sum(surr));
    clipped += ((ratio.value().array() - 1.0).abs() > cfg.clip).count();
    if (use_mirror) {
      shrink(st_m, rows);
      const Var mean_m = policy.net().forward(bound, tape.constant(s.obs_mirror), st_m);
      const Var diff = nnet::matmul(mean, pmat) - mean_m;
      mirror_total = accumulate_sum(mirror_total, nnet::sum(nnet::square(diff)));
    }
  }
  const double inv_n = 1.0 / static_cast<double>(mb.count);
  Var loss = surr_total * -inv_n;
  PolicyStepResult res;
  res.surrogate = loss.value()(0, 0);
  if (use_mirror) {
    const Var ml = mirror_total * inv_n;
    res.mirror = ml.value()(0, 0);
    loss = loss + ml * cfg.mirror_weight;
  }
  res.clip_fraction = static_cast<double>(clipped) * inv_n;
  if (!std::isfinite(loss.value()(0, 0))) {
    res.finite = false;
    return res;
  }
  tape.backward(loss);
  opt.step(policy.parameters());
  return res;
}

double value_step(nnet::Net& value, nnet::Adam& opt, const Minibatch& mb, const PPOConfig& cfg, bool& finite) {
  value.zero_grad();
  nnet::Tape tape;
  const auto bound = value.bind(tape);
  nnet::VarState st = to_vars(tape, mb.value_start);
  Var total;
  for (const auto& s : mb.slices) {
    shrink(st, s.obs.rows());
    const Var v = value.forward(bound, tape.constant(s.obs), st);
    total = accumulate_sum(total, nnet::sum(nnet::square(v - tape.constant(s.ret / cfg.value_scale()))));
  }
  const Var loss = total * (cfg.value_coef / static_cast<double>(mb.count));
  const double lv = loss.value()(0, 0);
  if (!std::isfinite(lv)) {
    finite = false;
    return lv;
  }
  tape.backward(loss);
  std::vector<nnet::Parameter*> ps;
  for (auto& p : value.params()) ps.push_back(&p);
  opt.step(ps);
  return lv;
}

struct PolicySnapshot {
  std::vector<Mat> params;
  std::vector<Mat> m, v;
  long t = 0;
};

PolicySnapshot snapshot(nnet::GaussianPolicy& policy, const nnet::Adam& opt) {
  PolicySnapshot s;
  for (auto* p : policy.parameters()) s.params.push_back(p->value);
  s.m = opt.first_moments();
  s.v = opt.second_moments();
  s.t = opt.steps();
  return s;
}

void restore(nnet::GaussianPolicy& policy, nnet::Adam& opt, const PolicySnapshot& s) {
  const auto ps = policy.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = s.params[i];
  opt.first_moments() = s.m;
  opt.second_moments() = s.v;
  opt.set_steps(s.t);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(i - 1)));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

double buffer_kl(const nnet::GaussianPolicy& policy, const RolloutBuffer& buffer) {
  return evaluate_buffer(policy, buffer, 0.2).kl;
}

double surrogate_loss(const nnet::GaussianPolicy& policy, const RolloutBuffer& buffer, double clip) {
  return evaluate_buffer(policy, buffer, clip).surrogate;
}

double mirror_loss(const nnet::GaussianPolicy& policy, const std::vector<std::vector<Eigen::VectorXd>>& sequences,
                   const env::MirrorMaps& maps) {
  std::vector<Episode> eps(sequences.size());
  std::vector<const Episode*> ptrs;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    eps[i].obs = sequences[i];
    eps[i].rewards.assign(sequences[i].size(), 0.0);
    ptrs.push_back(&eps[i]);
  }
  const auto plain = run_sequences(policy.net(), ptrs, nullptr);
  const auto mirrored = run_sequences(policy.net(), ptrs, &maps.observation);
  double total = 0.0;
  long long n = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    for (Eigen::Index t = 0; t < plain[i].rows(); ++t) {
      const Eigen::VectorXd a = maps.mirror_action(plain[i].row(t).transpose());
      total += (a - mirrored[i].row(t).transpose()).squaredNorm();
      ++n;
    }
  }
  return n > 0 ? total / static_cast<double>(n) : 0.0;
}

UpdateStats update(nnet::GaussianPolicy& policy, nnet::Net& value, Optimizers& opt, const RolloutBuffer& buffer,
                   const PPOConfig& config, const env::MirrorMaps& maps, std::uint64_t seed) {
  config.validate();
  if (buffer.episodes.empty()) throw Error("update: rollout buffer is empty");
  for (const auto& e : buffer.episodes)
    if (e.advantages.size() != e.rewards.size()) throw Error("update: advantages missing; run compute_gae first");

  opt.policy.set_lr(config.lr);
  opt.value.set_lr(config.lr);
  const Mat act_mirror = permutation_matrix(maps.action);
  const int obs_dim = policy.net().spec().input;
  const int act_dim = policy.net().spec().output;
  const bool recurrent = policy.net().recurrent();
  Rng rng(seed);

  UpdateStats stats;
  stats.surrogate_trace.push_back(surrogate_loss(policy, buffer, config.clip));
  const auto eps = all_episodes(buffer);
  std::vector<std::pair<const Episode*, int>> steps;
  if (!recurrent)
    for (const Episode* e : eps)
      for (int t = 0; t < e->length(); ++t) steps.emplace_back(e, t);

  bool stop = false;
  for (int epoch = 0; epoch < config.max_epochs && !stop; ++epoch) {
    const PolicySnapshot epoch_snap = snapshot(policy, opt.policy);
    std::vector<Minibatch> batches;
    if (recurrent) {
      std::vector<const Episode*> order = eps;
      shuffle(order, rng);
      for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(config.batch_trajectories)) {
        const auto end = std::min(order.size(), s + static_cast<std::size_t>(config.batch_trajectories));
        std::vector<const Episode*> chunk(order.begin() + static_cast<std::ptrdiff_t>(s),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
        batches.push_back(recurrent_batch(chunk, maps, obs_dim, act_dim, policy.net(), value));
      }
    } else {
      auto order = steps;
      shuffle(order, rng);
      for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(config.batch_timesteps)) {
        const auto end = std::min(order.size(), s + static_cast<std::size_t>(config.batch_timesteps));
        std::vector<std::pair<const Episode*, int>> chunk(order.begin() + static_cast<std::ptrdiff_t>(s),
                                                          order.begin() + static_cast<std::ptrdiff_t>(end));
        batches.push_back(flat_batch(chunk, maps, obs_dim, act_dim));
      }
    }

    int accepted_here = 0;
    for (const auto& mb : batches) {
      const PolicySnapshot mb_snap = config.kl_granularity == KlGranularity::minibatch ? snapshot(policy, opt.policy)
                                                                                        : PolicySnapshot{};
      PolicyStepResult pr;
      bool vfinite = true;
      double vl = 0.0;
      try {
        pr = policy_step(policy, opt.policy, mb, config, act_mirror);
        if (pr.finite) vl = value_step(value, opt.value, mb, config, vfinite);
      } catch (const NumericalError&) {
        pr.finite = false;
      }
      if (!pr.finite || !vfinite) {
        restore(policy, opt.policy, epoch_snap);
        stats.nonfinite_abort = true;
        stop = true;
        break;
      }
      if (config.kl_granularity == KlGranularity::minibatch) {
        const double kl = buffer_kl(policy, buffer);
        if (kl > config.kl_threshold) {
          restore(policy, opt.policy, mb_snap);
          stats.kl_abort = true;
          stats.rejected_kl = kl;
          stop = true;
          break;
        }
      }
      ++accepted_here;
      stats.policy_loss = pr.surrogate;
      stats.mirror_loss = pr.mirror;
      stats.clip_fraction = pr.clip_fraction;
      stats.value_loss = vl;
    }
    if (stats.nonfinite_abort) break;

    if (config.kl_granularity == KlGranularity::epoch) {
      const double kl = buffer_kl(policy, buffer);
      if (kl > config.kl_threshold) {
        restore(policy, opt.policy, epoch_snap);
        stats.kl_abort = true;
        stats.rejected_kl = kl;
        break;
      }
    }
    stats.minibatches += accepted_here;
    if (accepted_here > 0) {
      const BufferEval ev = evaluate_buffer(policy, buffer, config.clip);
      stats.epoch_kl.push_back(ev.kl);
      stats.surrogate_trace.push_back(ev.surrogate);
      if (!stop || accepted_here == static_cast<int>(batches.size())) ++stats.epochs_run;
    }
  }
  stats.kl = buffer_kl(policy, buffer);
  return stats;
}

}  // namespace stairwalk::ppo
