#include "stairwalk/eval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

namespace stairwalk::eval {

std::vector<double> default_speed_grid() { return {0.25, 0.5, 0.75, 1.0, 1.25, 1.5}; }

void TrialSpec::validate() const {
  if (!(rise > 0.0) || !(run > 0.0) || steps < 1) throw ConfigError("trial: rise, run and steps must be positive");
  if (trials < 1) throw ConfigError("trial: trials must be >= 1");
  if (speeds.empty()) throw ConfigError("trial: speed grid is empty");
  // Forward commands above the training range were never seen by the policy.
  for (double v : speeds)
    if (!(v > 0.0 && v <= 1.5)) throw ConfigError("trial: speed " + std::to_string(v) + " outside (0, 1.5] m/s");
  if (!(approach > 0.0) || !(landing > success_margin)) throw ConfigError("trial: landing must exceed the success margin");
  if (workers < 1) throw ConfigError("trial: workers must be >= 1");
}

Interval wilson_interval(int successes, int trials, double z) {
  if (trials <= 0) return {0.0, 1.0};
  const double n = trials;
  const double p = successes / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

namespace {

env::EpisodeConfig trial_config(const env::EpisodeConfig& base, const TrialSpec& spec, double speed,
                                std::shared_ptr<const terrain::TerrainProfile> ground) {
  env::EpisodeConfig c = base;
  c.dynamics.enabled = spec.randomize_dynamics;
  c.fixed_terrain = std::move(ground);
  c.fixed_command = env::Command{speed, 0.0, 0.0};
  c.resample_commands = false;
  c.start_x = 0.0;
  // Long enough to walk the whole course at the commanded speed twice over.
  const double course = spec.approach + spec.run * (spec.steps - 1) + spec.success_margin;
  const double seconds = 2.0 * course / speed + 2.0;
  c.horizon = std::max(base.horizon, static_cast<int>(std::ceil(seconds * c.dynamics.nominal_rate_hz)));
  return c;
}

Eigen::VectorXd mean_action(const nnet::GaussianPolicy& policy, const Eigen::VectorXd& obs,
                            nnet::RecurrentState& st) {
  return policy.net().forward(obs.transpose(), st).row(0).transpose();
}

}  // namespace

TrialOutcome run_trial(const nnet::GaussianPolicy& policy, const env::EpisodeConfig& base,
                       const sim::BipedModel& model, const TrialSpec& spec, double speed, std::uint64_t seed) {
  auto ground = std::make_shared<const terrain::TerrainProfile>(
      terrain::make_staircase(spec.rise, spec.run, spec.steps, spec.approach, spec.landing, spec.descend));
  const double goal = ground->metadata().stairs_end_x + spec.success_margin;
  env::Env e(trial_config(base, spec, speed, ground), model);
  Eigen::VectorXd obs = e.reset(seed);
  nnet::RecurrentState st = policy.net().initial_state(1);
  TrialOutcome out;
  while (true) {
    const env::StepResult r = e.step(mean_action(policy, obs, st));
    obs = r.observation;
    ++out.steps;
    out.final_x = e.state().q[sim::kX];
    if (out.final_x > goal) {
      out.success = true;
      break;
    }
    if (r.done) {
      out.fell = r.info.termination == env::Termination::fall || r.info.termination == env::Termination::instability;
      break;
    }
  }
  return out;
}

std::vector<SpeedResult> success_sweep(const nnet::GaussianPolicy& policy, const env::EpisodeConfig& base,
                                       const sim::BipedModel& model, const TrialSpec& spec) {
  spec.validate();
  const std::size_t n_speed = spec.speeds.size();
  const auto n_trials = static_cast<std::size_t>(spec.trials);
  std::vector<TrialOutcome> outcomes(n_speed * n_trials);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(spec.workers));
  // Trial k goes to worker k mod workers; results land in fixed slots.
  auto work = [&](int w) {
    try {
      for (std::size_t k = static_cast<std::size_t>(w); k < outcomes.size(); k += static_cast<std::size_t>(spec.workers)) {
        const std::size_t s = k / n_trials;
        const std::size_t t = k % n_trials;
        outcomes[k] = run_trial(policy, base, model, spec, spec.speeds[s], derive_seed(spec.seed, s, t, 0x7a1));
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  if (spec.workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < spec.workers; ++w) threads.emplace_back(work, w);
    for (auto& th : threads) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<SpeedResult> rows;
  for (std::size_t s = 0; s < n_speed; ++s) {
    SpeedResult r;
    r.speed = spec.speeds[s];
    r.trials = spec.trials;
    for (std::size_t t = 0; t < n_trials; ++t) {
      const auto& o = outcomes[s * n_trials + t];
      r.successes += o.success ? 1 : 0;
      r.falls += o.fell ? 1 : 0;
    }
    r.rate = static_cast<double>(r.successes) / r.trials;
    r.ci = wilson_interval(r.successes, r.trials);
    rows.push_back(r);
  }
  return rows;
}

env::TrajectoryLog record_episode(const nnet::GaussianPolicy& policy, env::EpisodeConfig config,
                                  const sim::BipedModel& model,
                                  std::shared_ptr<const terrain::TerrainProfile> terrain, double speed, int horizon,
                                  std::uint64_t seed) {
  config.fixed_terrain = std::move(terrain);
  config.fixed_command = env::Command{speed, 0.0, 0.0};
  config.resample_commands = false;
  config.horizon = horizon;
  env::Env e(config, model);
  e.set_recording(true);
  Eigen::VectorXd obs = e.reset(seed);
  nnet::RecurrentState st = policy.net().initial_state(1);
  while (true) {
    const env::StepResult r = e.step(mean_action(policy, obs, st));
    obs = r.observation;
    if (r.done) break;
  }
  return e.log();
}

// ---------------------------------------------------------------------------
// Energy

namespace {

double energy_rate(const sim::EnergySample& s, const std::array<double, sim::kJoints>& max_speed,
                   const std::array<double, sim::kJoints>& max_power) {
  double p = 0.0;
  for (int i = 0; i < sim::kJoints; ++i) {
    const auto k = static_cast<std::size_t>(i);
    p += std::max(s.torque[i] * s.omega[i], 0.0) + max_speed[k] / max_power[k] * s.torque[i] * s.torque[i];
  }
  return p;
}

std::vector<sim::EnergySample> samples_of(const env::TrajectoryLog& log, double t0, double t1) {
  std::vector<sim::EnergySample> out;
  for (const auto& st : log.steps)
    for (const auto& s : st.energy)
      if (s.t >= t0 && s.t <= t1) out.push_back(s);
  return out;
}

}  // namespace

double motor_energy(const std::vector<sim::EnergySample>& samples, const std::array<double, sim::kJoints>& max_speed,
                    const std::array<double, sim::kJoints>& max_power) {
  for (int i = 0; i < sim::kJoints; ++i)
    if (!(max_speed[static_cast<std::size_t>(i)] > 0.0) || !(max_power[static_cast<std::size_t>(i)] > 0.0))
      throw Error("motor energy: motor limits must be positive");
  double e = 0.0;
  for (std::size_t k = 1; k < samples.size(); ++k) {
    // Consecutive control steps meet at one instant with two samples (old and
    // new PD targets); their timestamps can disagree by rounding.
    double dt = samples[k].t - samples[k - 1].t;
    if (dt < -1e-9) throw Error("motor energy: sample times are not increasing");
    dt = std::max(dt, 0.0);
    e += 0.5 * dt * (energy_rate(samples[k - 1], max_speed, max_power) + energy_rate(samples[k], max_speed, max_power));
  }
  return e;
}

double motor_energy(const env::TrajectoryLog& log) {
  return motor_energy(log, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
}

double motor_energy(const env::TrajectoryLog& log, double t0, double t1) {
  for (std::size_t k = 0; k < log.steps.size(); ++k)
    if (log.steps[k].energy.empty())
      throw Error("motor energy: step " + std::to_string(k) + " of the log has no torque/speed samples");
  const auto samples = samples_of(log, t0, t1);
  if (samples.size() < 2) throw Error("motor energy: log holds fewer than two torque/speed samples in the window");
  return motor_energy(samples, log.max_speed, log.max_power);
}

double cost_of_transport(double energy, double mass, double gravity, double distance) {
  if (!(distance > 0.0)) throw NumericalError("cost of transport: no forward progress (distance " +
                                              std::to_string(distance) + " m)");
  if (!(mass > 0.0) || !(gravity > 0.0)) throw Error("cost of transport: mass and gravity must be positive");
  return energy / (mass * gravity * distance);
}

CotResult cost_of_transport(const env::TrajectoryLog& log, const CotOptions& opt) {
  if (log.steps.empty()) throw Error("cost of transport: empty log");
  CotResult r;
  r.t0 = log.initial_time + opt.discard;
  r.t1 = log.steps.back().time - opt.discard;
  if (!(r.t1 > r.t0)) throw Error("cost of transport: log is too short for the steady-state window");
  // Pelvis position at the step boundaries closest to the window edges.
  const auto at = [&](double t) {
    double best = std::numeric_limits<double>::infinity();
    double x = log.initial_q[sim::kX];
    if (std::abs(log.initial_time - t) < best) best = std::abs(log.initial_time - t);
    for (const auto& s : log.steps)
      if (std::abs(s.time - t) < best) {
        best = std::abs(s.time - t);
        x = s.q[sim::kX];
      }
    return x;
  };
  r.distance = at(r.t1) - at(r.t0);
  r.energy = motor_energy(log, r.t0, r.t1);
  r.mass = log.total_mass;
  r.cot = cost_of_transport(r.energy, r.mass, log.gravity, r.distance);
  return r;
}

// ---------------------------------------------------------------------------
// Gait analysis

namespace {

struct Phase {
  int foot = 0;
  std::size_t begin = 0;  // first step index of the phase
  std::size_t end = 0;    // one past the last
};

bool loaded(const env::LogStep& s, int foot, double threshold) {
  return s.grf[static_cast<std::size_t>(foot)].fz > threshold;
}

// Contiguous runs of steps with the given contact state.
std::vector<Phase> phases(const env::TrajectoryLog& log, int foot, bool stance, double threshold) {
  std::vector<Phase> out;
  std::size_t k = 0;
  while (k < log.steps.size()) {
    if (loaded(log.steps[k], foot, threshold) == stance) {
      Phase p{foot, k, k};
      while (k < log.steps.size() && loaded(log.steps[k], foot, threshold) == stance) ++k;
      p.end = k;
      out.push_back(p);
    } else {
      ++k;
    }
  }
  return out;
}

double step_start_time(const env::TrajectoryLog& log, std::size_t k) {
  return k == 0 ? log.initial_time : log.steps[k - 1].time;
}

void cumulative_trapezoid(const std::vector<double>& t, const std::vector<double>& f, std::vector<double>& out) {
  out.assign(t.size(), 0.0);
  for (std::size_t k = 1; k < t.size(); ++k) out[k] = out[k - 1] + 0.5 * (t[k] - t[k - 1]) * (f[k] + f[k - 1]);
}

}  // namespace

GaitAnalysis grf_analysis(const env::TrajectoryLog& log, double event_x, const GaitOptions& opt) {
  // A stance preceded by a swing is a touchdown; pick the earliest one past the event.
  const Phase* best = nullptr;
  std::vector<Phase> all;
  for (int foot = 0; foot < 2; ++foot) {
    auto ph = phases(log, foot, true, opt.touchdown_force);
    for (const auto& p : ph)
      if (p.begin > 0) all.push_back(p);
  }
  for (const auto& p : all) {
    const double x = log.steps[p.begin].feet[static_cast<std::size_t>(p.foot)].position.x();
    if (x < event_x) continue;
    if (!best || p.begin < best->begin) best = &p;
  }
  if (!best) throw Error("grf analysis: no touchdown at or beyond x = " + std::to_string(event_x));

  GaitAnalysis g;
  g.foot = best->foot;
  const auto f = static_cast<std::size_t>(best->foot);
  g.touchdown_time = step_start_time(log, best->begin);
  g.liftoff_time = log.steps[best->end - 1].time;
  const double before = log.steps[0].foot_ground[f];
  g.ground_change = log.steps[best->begin].foot_ground[f] - before;
  for (std::size_t k = best->begin; k < best->end; ++k) {
    g.time.push_back(log.steps[k].time - g.touchdown_time);
    g.fx.push_back(log.steps[k].grf[f].fx);
    g.fz.push_back(log.steps[k].grf[f].fz);
  }
  cumulative_trapezoid(g.time, g.fx, g.impulse_x);
  cumulative_trapezoid(g.time, g.fz, g.impulse_z);
  return g;
}

double vertical_impulse(const env::TrajectoryLog& log, double t0, double t1) {
  std::vector<double> t, f;
  for (const auto& s : log.steps) {
    if (s.time < t0 || s.time > t1) continue;
    t.push_back(s.time);
    f.push_back(s.grf[0].fz + s.grf[1].fz);
  }
  std::vector<double> cum;
  cumulative_trapezoid(t, f, cum);
  return cum.empty() ? 0.0 : cum.back();
}

nlohmann::ordered_json GaitAnalysis::to_json() const {
  nlohmann::ordered_json j;
  j["foot"] = foot == 0 ? "left" : "right";
  j["touchdown_time"] = touchdown_time;
  j["liftoff_time"] = liftoff_time;
  j["ground_change"] = ground_change;
  j["time"] = time;
  j["fx"] = fx;
  j["fz"] = fz;
  j["impulse_x"] = impulse_x;
  j["impulse_z"] = impulse_z;
  return j;
}

SwingMetrics swing_metrics(const env::TrajectoryLog& log, double event_x, const GaitOptions& opt) {
  std::vector<Phase> swings;
  for (int foot = 0; foot < 2; ++foot)
    for (const auto& p : phases(log, foot, false, opt.touchdown_force))
      if (p.begin > 0 && p.end < log.steps.size()) swings.push_back(p);  // lift-off and touchdown both observed
  if (swings.empty()) throw Error("swing metrics: the log has no complete airborne phase");

  const Phase* best = nullptr;
  for (const auto& p : swings) {
    const double x = log.steps[p.end].feet[static_cast<std::size_t>(p.foot)].position.x();
    if (x < event_x) continue;
    if (!best || p.end < best->end) best = &p;
  }
  if (!best) throw Error("swing metrics: no swing ends at or beyond x = " + std::to_string(event_x));

  SwingMetrics m;
  m.foot = best->foot;
  const auto f = static_cast<std::size_t>(best->foot);
  // Samples: lift-off point (end of the last stance step), every airborne step, touchdown.
  std::vector<double> t, px, pz;
  const double x0 = log.steps[best->begin - 1].feet[f].position.x();
  for (std::size_t k = best->begin - 1; k <= best->end; ++k) {
    const auto& s = log.steps[k];
    t.push_back(s.time);
    px.push_back(s.feet[f].position.x() - x0);
    pz.push_back(s.feet[f].position.y() - s.foot_ground[f]);
    m.leg_time.push_back(s.time);
    const double dx = s.feet[f].position.x() - s.q[sim::kX];
    const double dz = s.q[sim::kZ] - s.feet[f].position.y();
    m.leg_angle.push_back(std::atan2(dx, dz));
  }
  m.liftoff_time = t.front();
  m.touchdown_time = t.back();
  const double span = m.touchdown_time - m.liftoff_time;
  const int n = std::max(2, opt.path_samples);
  for (int i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / (n - 1);
    const double tq = m.liftoff_time + u * span;
    std::size_t k = 1;
    while (k + 1 < t.size() && t[k] < tq) ++k;
    const double w = t[k] > t[k - 1] ? std::clamp((tq - t[k - 1]) / (t[k] - t[k - 1]), 0.0, 1.0) : 1.0;
    m.phase.push_back(u);
    m.x.push_back(px[k - 1] + w * (px[k] - px[k - 1]));
    m.z.push_back(pz[k - 1] + w * (pz[k] - pz[k - 1]));
  }
  const auto apex = static_cast<std::size_t>(std::max_element(pz.begin(), pz.end()) - pz.begin());
  m.apex_clearance = pz[apex];

  // Least-squares slope of leg angle against time from the apex to touchdown.
  std::size_t first = std::min(apex, t.size() - 2);
  double st = 0, sa = 0, stt = 0, sta = 0;
  const double cnt = static_cast<double>(t.size() - first);
  for (std::size_t k = first; k < t.size(); ++k) {
    st += t[k];
    sa += m.leg_angle[k];
    stt += t[k] * t[k];
    sta += t[k] * m.leg_angle[k];
  }
  const double den = cnt * stt - st * st;
  m.retraction_rate = den > 0.0 ? (cnt * sta - st * sa) / den : 0.0;
  return m;
}

nlohmann::ordered_json SwingMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["foot"] = foot == 0 ? "left" : "right";
  j["liftoff_time"] = liftoff_time;
  j["touchdown_time"] = touchdown_time;
  j["apex_clearance"] = apex_clearance;
  j["retraction_rate"] = retraction_rate;
  j["phase"] = phase;
  j["x"] = x;
  j["z"] = z;
  j["leg_time"] = leg_time;
  j["leg_angle"] = leg_angle;
  return j;
}

// ---------------------------------------------------------------------------
// Output

std::string success_csv(const std::vector<SpeedResult>& rows) {
  std::ostringstream o;
  o << std::setprecision(6);
  o << "speed,trials,successes,falls,rate,ci_lo,ci_hi\n";
  for (const auto& r : rows)
    o << r.speed << ',' << r.trials << ',' << r.successes << ',' << r.falls << ',' << r.rate << ',' << r.ci.lo << ','
      << r.ci.hi << '\n';
  return o.str();
}

std::string cot_csv(const std::vector<std::pair<std::string, CotResult>>& rows) {
  std::ostringstream o;
  o << std::setprecision(6);
  o << "policy,cot,energy_j,distance_m,mass_kg\n";
  for (const auto& [name, r] : rows) o << name << ',' << r.cot << ',' << r.energy << ',' << r.distance << ',' << r.mass << '\n';
  return o.str();
}

}  // namespace stairwalk::eval
