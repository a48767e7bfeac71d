#include "stairwalk/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace stairwalk::sim {

namespace {

// Rotation about +y applied to a planar (x, z) vector.
inline Vec2 rotate(double a, double x, double z) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  return {x * c + z * s, -x * s + z * c};
}

// Derivative of a rotated vector with respect to its angle.
inline Vec2 perp(const Vec2& r) { return {r.y(), -r.x()}; }

constexpr double kMaxDepth = 0.1;
constexpr double kMaxSpeed = 200.0;

}  // namespace

std::array<double, 4> pitch_quaternion(double theta) {
  return {std::cos(0.5 * theta), 0.0, std::sin(0.5 * theta), 0.0};
}

Biped::Biped(BipedModel model, DynRandSample sample) : model_(std::move(model)), sample_(sample) {
  model_.validate();
  link_ = {model_.torso, model_.thigh, model_.shank, model_.foot, model_.thigh, model_.shank, model_.foot};
  for (std::size_t i = 0; i < kLinks; ++i) {
    mass_[i] = link_[i].mass * sample_.mass_scale[i];
    inertia_[i] = link_[i].inertia * sample_.mass_scale[i];
  }
}

double Biped::total_mass() const {
  double m = 0.0;
  for (double v : mass_) m += v;
  return m;
}

Kinematics Biped::kinematics(const Vec9& q, const Vec9& qd) const {
  Kinematics k;
  k.hip = {q[kX], q[kZ]};
  const double pitch = q[kPitch];
  k.angle[kTorso] = pitch;
  k.omega[kTorso] = qd[kPitch];
  k.com[kTorso] = k.hip + rotate(pitch, link_[kTorso].com_x, link_[kTorso].com_z);

  auto base_jac = [&](const Vec2& p) {
    Mat29 J = Mat29::Zero();
    J(0, kX) = 1.0;
    J(1, kZ) = 1.0;
    J.col(kPitch) = perp(p - k.hip);
    return J;
  };

  k.com_jacobian[kTorso] = base_jac(k.com[kTorso]);
  k.com_bias_acc[kTorso] = -k.omega[kTorso] * k.omega[kTorso] * (k.com[kTorso] - k.hip);

  for (int side = 0; side < 2; ++side) {
    const int jb = kJointBase + 3 * side;
    const int lb = 1 + 3 * side;
    const double a1 = pitch + q[jb];
    const double a2 = a1 + q[jb + 1];
    const double a3 = a2 + q[jb + 2];
    const double w1 = qd[kPitch] + qd[jb];
    const double w2 = w1 + qd[jb + 1];
    const double w3 = w2 + qd[jb + 2];
    const Vec2 knee = k.hip + rotate(a1, 0.0, -model_.thigh.length);
    const Vec2 ankle = knee + rotate(a2, 0.0, -model_.shank.length);
    k.knee[static_cast<std::size_t>(side)] = knee;
    k.ankle[static_cast<std::size_t>(side)] = ankle;

    const double angles[3] = {a1, a2, a3};
    const double omegas[3] = {w1, w2, w3};
    const Vec2 pivots[3] = {k.hip, knee, ankle};
    // Velocity-product acceleration of each pivot relative to the hip.
    const Vec2 pivot_bias[3] = {Vec2::Zero(), -w1 * w1 * (knee - k.hip),
                                -w1 * w1 * (knee - k.hip) - w2 * w2 * (ankle - knee)};

    auto point_jac = [&](const Vec2& p, int level) {
      Mat29 J = base_jac(p);
      for (int l = 0; l <= level; ++l) J.col(jb + l) = perp(p - pivots[l]);
      return J;
    };

    for (int l = 0; l < 3; ++l) {
      const auto li = static_cast<std::size_t>(lb + l);
      k.angle[li] = angles[l];
      k.omega[li] = omegas[l];
      const Vec2 p = pivots[l] + rotate(angles[l], link_[li].com_x, link_[li].com_z);
      k.com[li] = p;
      k.com_jacobian[li] = point_jac(p, l);
      k.com_bias_acc[li] = pivot_bias[l] - omegas[l] * omegas[l] * (p - pivots[l]);
    }

    const Vec2 heel = ankle + rotate(a3, model_.heel_x, model_.heel_z);
    const Vec2 toe = ankle + rotate(a3, model_.toe_x, model_.toe_z);
    const auto ci = static_cast<std::size_t>(2 * side);
    k.point[ci] = heel;
    k.point[ci + 1] = toe;
    k.point_jacobian[ci] = point_jac(heel, 2);
    k.point_jacobian[ci + 1] = point_jac(toe, 2);
  }
  return k;
}

Mat99 Biped::mass_matrix(const Kinematics& k) const {
  Mat99 M = Mat99::Zero();
  for (std::size_t i = 0; i < kLinks; ++i) {
    M.noalias() += mass_[i] * k.com_jacobian[i].transpose() * k.com_jacobian[i];
  }
  // Angular Jacobians are 0/1 rows: torso {pitch}, thigh {pitch, hip}, ...
  for (std::size_t i = 0; i < kLinks; ++i) {
    int cols[4];
    int n = 0;
    cols[n++] = kPitch;
    if (i > 0) {
      const int side = i <= 3 ? 0 : 1;
      const int level = static_cast<int>(i) - 1 - 3 * side;
      for (int l = 0; l <= level; ++l) cols[n++] = kJointBase + 3 * side + l;
    }
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) M(cols[a], cols[b]) += inertia_[i];
  }
  return M;
}

Vec6 Biped::clamp_torques(const Vec6& tau, const Vec9& qd) const {
  Vec6 out;
  for (int i = 0; i < kJoints; ++i) {
    const auto& jp = model_.joint(i);
    const double w = std::abs(qd[kJointBase + i]);
    const double limit = jp.torque_limit * std::max(0.0, 1.0 - w / jp.max_speed);
    out[i] = std::clamp(tau[i], -limit, limit);
  }
  return out;
}

Vec6 Biped::pd_torques(const SimState& s, const Vec6& targets) const {
  Vec6 tau;
  for (int i = 0; i < kJoints; ++i) {
    const auto& jp = model_.joint(i);
    const double measured = s.q[kJointBase + i] + sample_.encoder_offset[static_cast<std::size_t>(i)];
    tau[i] = jp.kp * (targets[i] - measured) - jp.kd * s.qd[kJointBase + i];
  }
  return clamp_torques(tau, s.qd);
}

SimState Biped::step_inner(const SimState& s, const Vec6& joint_torques, const terrain::TerrainProfile& ground,
                           double dt) const {
  const Kinematics k = kinematics(s.q, s.qd);
  const Mat99 M = mass_matrix(k);
  const auto& cp = model_.contact;
  const double mu = sample_.friction;

  Vec9 Q = Vec9::Zero();
  const Vec2 g(0.0, -model_.gravity);
  for (std::size_t i = 0; i < kLinks; ++i)
    Q.noalias() += mass_[i] * k.com_jacobian[i].transpose() * (g - k.com_bias_acc[i]);

  const Vec6 tau = clamp_torques(joint_torques, s.qd);
  for (int i = 0; i < kJoints; ++i) {
    const double damping = model_.joint(i).damping * sample_.damping_scale[static_cast<std::size_t>(i)];
    Q[kJointBase + i] += tau[i] - damping * s.qd[kJointBase + i];
  }

  SimState next = s;
  for (std::size_t c = 0; c < kContactPoints; ++c) {
    ContactState cs = s.contacts[c];
    const Vec2& p = k.point[c];
    const auto gc = ground.contact(p.x(), p.y());
    if (!gc.inside) {
      cs = ContactState{};
      next.contacts[c] = cs;
      continue;
    }
    const Vec2 v = k.point_jacobian[c] * s.qd;
    const Vec2 n(gc.nx, gc.nz);
    const Vec2 t(gc.nz, -gc.nx);
    const double depth_rate = -v.dot(n);
    const double fn = std::max(0.0, cp.normal_stiffness * gc.depth + cp.normal_damping * depth_rate);
    double ft = 0.0;
    if (!cs.anchored) {
      cs.anchored = true;
      cs.anchor_x = p.x();
      cs.anchor_z = p.y();
    }
    if (fn > 0.0) {
      const double slip = (p - Vec2(cs.anchor_x, cs.anchor_z)).dot(t);
      const double trial = -cp.tangential_stiffness * slip - cp.tangential_damping * v.dot(t);
      const double limit = mu * fn;
      if (std::abs(trial) > limit) {
        ft = std::copysign(limit, trial);
        const Vec2 anchor = p + (ft / cp.tangential_stiffness) * t;
        cs.anchor_x = anchor.x();
        cs.anchor_z = anchor.y();
      } else {
        ft = trial;
      }
    } else {
      cs.anchor_x = p.x();
      cs.anchor_z = p.y();
    }
    const Vec2 f = fn * n + ft * t;
    Q.noalias() += k.point_jacobian[c].transpose() * f;
    cs.active = true;
    cs.normal = fn;
    cs.tangential = ft;
    cs.fx = f.x();
    cs.fz = f.y();
    cs.depth = gc.depth;
    next.contacts[c] = cs;
    if (gc.depth > kMaxDepth)
      throw SimulationInstability("contact penetration " + std::to_string(gc.depth) + " m exceeds limit");
  }

  const Vec9 qdd = M.ldlt().solve(Q);
  next.qd = s.qd + dt * qdd;
  next.q = s.q + dt * next.qd;
  next.pelvis_acc = {qdd[kX], qdd[kZ]};
  next.time = s.time + dt;

  if (!next.q.allFinite() || !next.qd.allFinite() || next.qd.cwiseAbs().maxCoeff() > kMaxSpeed)
    throw SimulationInstability("simulation diverged at t=" + std::to_string(next.time));
  return next;
}

ControlResult Biped::control_step(const SimState& s, const Vec6& targets, double rate_hz,
                                  const terrain::TerrainProfile& ground, int sample_every) const {
  if (!targets.allFinite()) throw NumericalError("control_step: non-finite PD targets");
  if (!(rate_hz > 0.0) || rate_hz > kInnerRateHz) throw ConfigError("control_step: execution rate out of range");
  if (sample_every < 1) sample_every = 1;

  const double period = 1.0 / rate_hz;
  const int full = static_cast<int>(std::floor(period * kInnerRateHz + 1e-9));
  const double remainder = period - full * kInnerDt;
  const int steps = full + (remainder > 1e-12 ? 1 : 0);

  ControlResult out;
  out.state = s;
  std::array<FootGrf, 2> grf{};
  Vec6 torque_sum = Vec6::Zero();
  double elapsed = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double dt = i < full ? kInnerDt : remainder;
    const Vec6 tau = pd_torques(out.state, targets);
    if (i % sample_every == 0) {
      out.energy_samples.push_back({elapsed, tau, out.state.qd.tail<kJoints>()});
    }
    out.state = step_inner(out.state, tau, ground, dt);
    elapsed += dt;
    torque_sum += dt * tau;
    for (std::size_t c = 0; c < kContactPoints; ++c) {
      const auto& cs = out.state.contacts[c];
      auto& f = grf[c / 2];
      f.tangential += dt * cs.tangential;
      f.normal += dt * cs.normal;
      f.fx += dt * cs.fx;
      f.fz += dt * cs.fz;
      out.max_depth = std::max(out.max_depth, cs.depth);
    }
  }
  out.energy_samples.push_back({elapsed, pd_torques(out.state, targets), out.state.qd.tail<kJoints>()});
  for (auto& f : grf) {
    f.tangential /= elapsed;
    f.normal /= elapsed;
    f.fx /= elapsed;
    f.fz /= elapsed;
  }
  out.state.grf = grf;
  out.elapsed = elapsed;
  out.substeps = steps;
  out.mean_torque = torque_sum / elapsed;
  return out;
}

double Biped::kinetic_energy(const SimState& s) const {
  const Kinematics k = kinematics(s.q, s.qd);
  return 0.5 * s.qd.dot(mass_matrix(k) * s.qd);
}

double Biped::potential_energy(const SimState& s) const {
  const Kinematics k = kinematics(s.q, s.qd);
  double e = 0.0;
  for (std::size_t i = 0; i < kLinks; ++i) e += mass_[i] * model_.gravity * k.com[i].y();
  return e;
}

SimState Biped::standing_state(const terrain::TerrainProfile& ground, double x, const Vec6& joints) const {
  SimState s;
  s.q[kX] = x;
  s.q[kZ] = 0.0;
  s.q.tail<kJoints>() = joints;
  const Kinematics k = kinematics(s.q, s.qd);
  double lift = -1e9;
  for (const auto& p : k.point) lift = std::max(lift, ground.height_at(p.x()) - p.y());
  s.q[kZ] = lift;
  return s;
}

Proprioception Biped::read_proprioception(const SimState& s) const {
  Proprioception p;
  p.pelvis_quat = pitch_quaternion(s.q[kPitch]);
  p.pelvis_omega = {0.0, s.qd[kPitch], 0.0};
  for (int i = 0; i < kJoints; ++i) {
    p.joint_pos[i] = s.q[kJointBase + i] + sample_.encoder_offset[static_cast<std::size_t>(i)];
    p.joint_vel[i] = s.qd[kJointBase + i];
  }
  return p;
}

std::array<FootState, 2> Biped::feet(const SimState& s) const {
  const Kinematics k = kinematics(s.q, s.qd);
  std::array<FootState, 2> out;
  for (std::size_t side = 0; side < 2; ++side) {
    const auto h = 2 * side;
    out[side].position = 0.5 * (k.point[h] + k.point[h + 1]);
    out[side].velocity = 0.5 * (k.point_jacobian[h] + k.point_jacobian[h + 1]) * s.qd;
    out[side].pitch = k.angle[3 + 3 * side];
  }
  return out;
}

}  // namespace stairwalk::sim
