#include "stairwalk/env.hpp"

#include <algorithm>
#include <cmath>

namespace stairwalk::env {

namespace {

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

Range range_from(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(std::string(what) + " must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Range pick(const CommandRanges& r, int field) {
  switch (field) {
    case 0: return r.forward;
    case 1: return r.sideways;
    default: return r.turn;
  }
}

constexpr int kMaxResetAttempts = 10;
constexpr double kMaxInitialDepth = 0.02;

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::flat_ground: return "flat_ground";
    case Variant::stair: return "stair";
    case Variant::proximity: return "proximity";
  }
  return "stair";
}

Variant variant_from_string(const std::string& s) {
  if (s == "flat_ground" || s == "flat") return Variant::flat_ground;
  if (s == "stair") return Variant::stair;
  if (s == "proximity") return Variant::proximity;
  throw ConfigError("unknown environment variant '" + s + "'");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::none: return "none";
    case Termination::horizon: return "horizon";
    case Termination::fall: return "fall";
    case Termination::instability: return "instability";
  }
  return "none";
}

void CommandRanges::validate() const {
  if (!forward.ordered() || !sideways.ordered() || !turn.ordered())
    throw ConfigError("command ranges must satisfy lo <= hi");
  if (!(resample_probability >= 0.0 && resample_probability <= 1.0))
    throw ConfigError("command resample probability must be in [0, 1]");
}

void to_json(nlohmann::json& j, const CommandRanges& c) {
  j = nlohmann::json{{"forward", range_json(c.forward)},
                     {"sideways", range_json(c.sideways)},
                     {"turn", range_json(c.turn)},
                     {"resample_probability", c.resample_probability}};
}

void from_json(const nlohmann::json& j, CommandRanges& c) {
  CommandRanges r;
  if (j.contains("forward")) r.forward = range_from(j.at("forward"), "commands.forward");
  if (j.contains("sideways")) r.sideways = range_from(j.at("sideways"), "commands.sideways");
  if (j.contains("turn")) r.turn = range_from(j.at("turn"), "commands.turn");
  if (j.contains("resample_probability")) r.resample_probability = j.at("resample_probability").get<double>();
  r.validate();
  c = r;
}

std::uint64_t ObsLayout::checksum() const {
  std::string desc = "obs-v" + std::to_string(kVersion) + ":quat@0x4,omega@4x3,qpos@7x6,qvel@13x6,cmd@19x3,clock@22x2";
  if (proximity) desc += ",prox@24x1";
  return fnv1a64(desc);
}

Eigen::VectorXd SignedPermutation::apply(const Eigen::VectorXd& x) const {
  if (x.size() != size()) throw LayoutMismatch("mirror map expects length " + std::to_string(size()) + ", got " +
                                               std::to_string(x.size()));
  Eigen::VectorXd y(x.size());
  for (int i = 0; i < size(); ++i) y[i] = sign[static_cast<std::size_t>(i)] * x[perm[static_cast<std::size_t>(i)]];
  return y;
}

Eigen::MatrixXd SignedPermutation::apply_rows(const Eigen::MatrixXd& x) const {
  if (x.cols() != size()) throw LayoutMismatch("mirror map expects " + std::to_string(size()) + " columns");
  Eigen::MatrixXd y(x.rows(), x.cols());
  for (int i = 0; i < size(); ++i)
    y.col(i) = sign[static_cast<std::size_t>(i)] * x.col(perm[static_cast<std::size_t>(i)]);
  return y;
}

bool SignedPermutation::is_involution() const {
  for (int i = 0; i < size(); ++i) {
    const auto j = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
    if (perm[j] != i) return false;
    if (sign[static_cast<std::size_t>(i)] * sign[j] != 1.0) return false;
  }
  return true;
}

MirrorMaps MirrorMaps::for_layout(const ObsLayout& layout) {
  MirrorMaps m;
  const int n = layout.size();
  m.observation.perm.resize(static_cast<std::size_t>(n));
  m.observation.sign.assign(static_cast<std::size_t>(n), 1.0);
  for (int i = 0; i < n; ++i) m.observation.perm[static_cast<std::size_t>(i)] = i;
  auto& p = m.observation.perm;
  auto& s = m.observation.sign;
  // Reflection through the sagittal plane negates roll and yaw.
  s[ObsLayout::kQuat + 1] = -1.0;
  s[ObsLayout::kQuat + 3] = -1.0;
  s[ObsLayout::kOmega + 0] = -1.0;
  s[ObsLayout::kOmega + 2] = -1.0;
  for (int block : {ObsLayout::kJointPos, ObsLayout::kJointVel}) {
    for (int k = 0; k < 3; ++k) {
      p[static_cast<std::size_t>(block + k)] = block + 3 + k;
      p[static_cast<std::size_t>(block + 3 + k)] = block + k;
    }
  }
  s[ObsLayout::kCommand + 1] = -1.0;
  s[ObsLayout::kCommand + 2] = -1.0;
  p[ObsLayout::kClock] = ObsLayout::kClock + 1;
  p[ObsLayout::kClock + 1] = ObsLayout::kClock;

  m.action.perm = {3, 4, 5, 0, 1, 2, 6};
  m.action.sign.assign(kActionSize, 1.0);
  return m;
}

Eigen::VectorXd MirrorMaps::mirror_observation(const Eigen::VectorXd& obs) const { return observation.apply(obs); }
Eigen::VectorXd MirrorMaps::mirror_action(const Eigen::VectorXd& act) const { return action.apply(act); }

void EpisodeConfig::validate() const {
  if (horizon <= 0) throw ConfigError("episode horizon must be > 0");
  terrain.validate();
  dynamics.validate();
  commands.validate();
  weights.validate();
  if (joint_jitter < 0.0) throw ConfigError("joint_jitter must be >= 0");
  if (!(fall_height_ratio > 0.0 && fall_height_ratio < 1.0)) throw ConfigError("fall_height_ratio must be in (0, 1)");
  if (!(fall_pitch > 0.0)) throw ConfigError("fall_pitch must be > 0");
  if (!(kappa > 0.0)) throw ConfigError("kappa must be > 0");
}

void to_json(nlohmann::json& j, const EpisodeConfig& c) {
  j = nlohmann::json{{"variant", to_string(c.variant)},
                     {"horizon", c.horizon},
                     {"terrain", c.terrain},
                     {"dynamics", c.dynamics},
                     {"commands", c.commands},
                     {"joint_jitter", c.joint_jitter},
                     {"fall_height_ratio", c.fall_height_ratio},
                     {"fall_pitch", c.fall_pitch},
                     {"proximity_radius", c.proximity_radius},
                     {"reward_weights", c.weights},
                     {"kappa", c.kappa}};
}

void from_json(const nlohmann::json& j, EpisodeConfig& c) {
  EpisodeConfig r;
  if (j.contains("variant")) r.variant = variant_from_string(j.at("variant").get<std::string>());
  if (j.contains("horizon")) r.horizon = j.at("horizon").get<int>();
  if (j.contains("terrain")) r.terrain = j.at("terrain").get<terrain::StairGenConfig>();
  if (j.contains("dynamics")) r.dynamics = j.at("dynamics").get<sim::DynRandConfig>();
  if (j.contains("commands")) r.commands = j.at("commands").get<CommandRanges>();
  if (j.contains("joint_jitter")) r.joint_jitter = j.at("joint_jitter").get<double>();
  if (j.contains("fall_height_ratio")) r.fall_height_ratio = j.at("fall_height_ratio").get<double>();
  if (j.contains("fall_pitch")) r.fall_pitch = j.at("fall_pitch").get<double>();
  if (j.contains("proximity_radius")) r.proximity_radius = j.at("proximity_radius").get<double>();
  if (j.contains("reward_weights")) r.weights = j.at("reward_weights").get<gait::RewardWeights>();
  if (j.contains("kappa")) r.kappa = j.at("kappa").get<double>();
  r.validate();
  c = r;
}

Env::Env(EpisodeConfig config, sim::BipedModel model)
    : config_(std::move(config)), model_(std::move(model)), layout_(config_.layout()) {
  config_.validate();
  model_.validate();
  mirror_ = MirrorMaps::for_layout(layout_);
  indicators_ = gait::IndicatorSet::with_kappa(config_.kappa);
  const sim::Biped nominal(model_);
  const terrain::TerrainProfile level = terrain::make_incline(0.0);
  nominal_height_ = nominal.standing_state(level, 0.0, model_.nominal_pose()).q[sim::kZ];
  clock_.control_period = 1.0 / config_.dynamics.nominal_rate_hz;
}

sim::Vec6 Env::pd_targets(const Eigen::VectorXd& action) const {
  sim::Vec6 t;
  for (int i = 0; i < sim::kJoints; ++i) {
    const auto& jp = model_.joint(i);
    t[i] = jp.nominal + std::clamp(action[i], -1.0, 1.0) * jp.action_scale;
  }
  return t;
}

double Env::phase_delta(double raw) const {
  const double a = std::clamp(raw, -1.0, 1.0);
  const double mid = 0.5 * (clock_.delta_multiplier.lo + clock_.delta_multiplier.hi);
  const double half = 0.5 * clock_.delta_multiplier.width();
  return clock_.nominal_delta() * (mid + half * a);
}

bool Env::fallen(const sim::SimState& s) const {
  const double height = s.q[sim::kZ] - terrain_->height_at(s.q[sim::kX]);
  return height < config_.fall_height_ratio * nominal_height_ || std::abs(s.q[sim::kPitch]) > config_.fall_pitch;
}

namespace {

void draw_field(const CommandRanges& ranges, int field, Rng& rng, Command& command) {
  const double v = uniform(rng, pick(ranges, field));
  if (field == 0) command.forward = v;
  else if (field == 1) command.sideways = v;
  else command.turn = v;
}

}  // namespace

Command CommandSchedule::sample(Rng& rng) const {
  Command c;
  for (int f = 0; f < 3; ++f) draw_field(ranges, f, rng, c);
  return c;
}

std::array<bool, 3> CommandSchedule::step(Rng& rng, Command& command) const {
  std::array<bool, 3> hit{};
  for (int f = 0; f < 3; ++f) {
    hit[static_cast<std::size_t>(f)] = uniform01(rng) < ranges.resample_probability;
    if (hit[static_cast<std::size_t>(f)]) draw_field(ranges, f, rng, command);
  }
  return hit;
}

Eigen::VectorXd Env::reset(std::uint64_t seed) {
  for (int attempt = 0; attempt < kMaxResetAttempts; ++attempt) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(attempt));
    if (config_.fixed_terrain) {
      terrain_ = config_.fixed_terrain;
    } else if (config_.variant == Variant::flat_ground) {
      terrain::StairGenConfig flat = config_.terrain;
      flat.step_count = {0, 0};
      terrain_ = std::make_shared<const terrain::TerrainProfile>(terrain::generate(flat, derive_seed(s, 1)));
    } else {
      terrain_ = std::make_shared<const terrain::TerrainProfile>(terrain::generate(config_.terrain, derive_seed(s, 1)));
    }
    const sim::DynRandSample sample =
        sim::sample_dynamics(config_.dynamics, derive_seed(s, 2), model_.contact.nominal_friction);
    biped_ = std::make_unique<sim::Biped>(model_, sample);
    rng_ = Rng(derive_seed(s, 3));

    sim::Vec6 joints = model_.nominal_pose();
    for (int i = 0; i < sim::kJoints; ++i) joints[i] += uniform(rng_, -config_.joint_jitter, config_.joint_jitter);
    state_ = biped_->standing_state(*terrain_, config_.start_x, joints);

    bool ok = state_.q.allFinite() && !fallen(state_);
    if (ok) {
      const sim::Kinematics k = biped_->kinematics(state_.q, state_.qd);
      for (const auto& p : k.point) {
        const auto c = terrain_->contact(p.x(), p.y());
        if (c.inside && c.depth > kMaxInitialDepth) ok = false;
      }
    }
    if (!ok) continue;

    clock_.phase = 0.0;
    if (config_.fixed_command) {
      command_ = *config_.fixed_command;
    } else {
      command_ = CommandSchedule{config_.commands}.sample(rng_);
    }
    previous_action_ = Eigen::VectorXd::Zero(kActionSize);
    resample_counts_ = {0, 0, 0};
    step_count_ = 0;
    done_ = false;
    termination_ = Termination::none;
    if (recording_) {
      log_ = TrajectoryLog{};
      log_.total_mass = biped_->total_mass();
      log_.gravity = model_.gravity;
      for (int i = 0; i < sim::kJoints; ++i) {
        log_.max_speed[static_cast<std::size_t>(i)] = model_.joint(i).max_speed;
        log_.max_power[static_cast<std::size_t>(i)] = model_.joint(i).max_power;
      }
      log_.initial_q = state_.q;
      log_.initial_time = state_.time;
    }
    return observe();
  }
  throw SimulationInstability("reset: no stable initial pose after " + std::to_string(kMaxResetAttempts) +
                              " attempts");
}

Eigen::VectorXd Env::observe() const {
  Eigen::VectorXd obs(layout_.size());
  const sim::Proprioception p = biped_->read_proprioception(state_);
  for (int i = 0; i < 4; ++i) obs[ObsLayout::kQuat + i] = p.pelvis_quat[static_cast<std::size_t>(i)];
  for (int i = 0; i < 3; ++i) obs[ObsLayout::kOmega + i] = p.pelvis_omega[static_cast<std::size_t>(i)];
  obs.segment<6>(ObsLayout::kJointPos) = p.joint_pos;
  obs.segment<6>(ObsLayout::kJointVel) = p.joint_vel;
  // Lateral and yaw commands cannot be followed in the sagittal plane.
  obs[ObsLayout::kCommand + 0] = command_.forward;
  obs[ObsLayout::kCommand + 1] = 0.0;
  obs[ObsLayout::kCommand + 2] = 0.0;
  const auto [p1, p2] = gait::clock_inputs(clock_.phase);
  obs[ObsLayout::kClock + 0] = p1;
  obs[ObsLayout::kClock + 1] = p2;
  if (layout_.proximity)
    obs[ObsLayout::kProximity] = terrain::proximity_bit(*terrain_, state_.q[sim::kX], config_.proximity_radius);
  return obs;
}

StepResult Env::step(const Eigen::VectorXd& action) {
  if (done_) throw Error("step called on a finished episode; call reset first");
  if (action.size() != kActionSize)
    throw ShapeError("action must have " + std::to_string(kActionSize) + " entries, got " +
                     std::to_string(action.size()));
  if (!action.allFinite()) throw NumericalError("action contains non-finite values");

  const Eigen::VectorXd a = action.cwiseMax(-1.0).cwiseMin(1.0);
  const sim::Vec6 targets = pd_targets(a);
  const double rate = biped_->sample().draw_rate(rng_);
  const double phase = clock_.phase;
  const sim::SimState before = state_;

  StepResult out;
  out.info.phase = phase;
  out.info.rate_hz = rate;
  sim::ControlResult res;
  try {
    res = biped_->control_step(state_, targets, rate, *terrain_);
  } catch (const SimulationInstability&) {
    ++step_count_;
    done_ = true;
    termination_ = Termination::instability;
    out.observation = observe();
    out.done = true;
    out.reward = 0.0;
    out.info.termination = termination_;
    if (recording_) log_.termination = to_string(termination_);
    return out;
  }
  state_ = res.state;
  clock_.advance(phase_delta(a[kActionSize - 1]));

  if (config_.resample_commands && !config_.fixed_command) {
    out.info.command_resampled = CommandSchedule{config_.commands}.step(rng_, command_);
    for (std::size_t f = 0; f < 3; ++f) resample_counts_[f] += out.info.command_resampled[f] ? 1 : 0;
  }

  const auto feet = biped_->feet(state_);
  gait::RewardInputs in;
  in.left_force = std::hypot(state_.grf[0].fx, state_.grf[0].fz);
  in.right_force = std::hypot(state_.grf[1].fx, state_.grf[1].fz);
  in.left_foot_speed = feet[0].velocity.norm();
  in.right_foot_speed = feet[1].velocity.norm();
  in.body_orientation = sim::pitch_quaternion(state_.q[sim::kPitch]);
  in.left_foot_orientation = sim::pitch_quaternion(feet[0].pitch);
  in.right_foot_orientation = sim::pitch_quaternion(feet[1].pitch);
  in.forward_speed_desired = command_.forward;
  in.forward_speed_actual = (state_.q[sim::kX] - before.q[sim::kX]) / res.elapsed;
  in.action = a;
  in.previous_action = previous_action_;
  in.torque = res.mean_torque;
  in.pelvis_rotation = std::abs(state_.qd[sim::kPitch]);
  in.pelvis_acceleration = (state_.qd.head<2>() - before.qd.head<2>()).norm() / res.elapsed;
  const gait::RewardBreakdown rb = gait::reward(in, phase, config_.weights, indicators_);
  previous_action_ = a;

  ++step_count_;
  if (fallen(state_)) {
    termination_ = Termination::fall;
  } else if (step_count_ >= config_.horizon) {
    termination_ = Termination::horizon;
  }
  done_ = termination_ != Termination::none;

  out.observation = observe();
  out.reward = rb.reward;
  out.done = done_;
  out.info.breakdown = rb;
  out.info.grf = state_.grf;
  out.info.termination = termination_;
  out.info.elapsed = res.elapsed;
  out.info.max_depth = res.max_depth;

  if (recording_) {
    LogStep ls;
    ls.time = state_.time;
    ls.q = state_.q;
    ls.qd = state_.qd;
    ls.action = a;
    ls.torque = res.mean_torque;
    ls.grf = state_.grf;
    ls.feet = feet;
    for (std::size_t side = 0; side < 2; ++side) ls.foot_ground[side] = terrain_->height_at(feet[side].position.x());
    ls.ground = terrain_->height_at(state_.q[sim::kX]);
    ls.phase = phase;
    ls.reward = rb.reward;
    ls.terms = rb.cost;
    ls.energy = std::move(res.energy_samples);
    for (auto& e : ls.energy) e.t += before.time;
    log_.steps.push_back(std::move(ls));
    log_.termination = to_string(termination_);
  }
  return out;
}

}  // namespace stairwalk::env
