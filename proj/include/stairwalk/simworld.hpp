#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "stairwalk/common.hpp"
#include "stairwalk/terrain.hpp"

namespace stairwalk::sim {

using Vec2 = Eigen::Vector2d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat29 = Eigen::Matrix<double, 2, 9>;
using Mat99 = Eigen::Matrix<double, 9, 9>;

inline constexpr int kDof = 9;
inline constexpr int kJoints = 6;
inline constexpr int kLinks = 7;
inline constexpr double kInnerRateHz = 2000.0;
inline constexpr double kInnerDt = 1.0 / kInnerRateHz;

// Generalized coordinate layout: pelvis x, pelvis z, pelvis pitch, then
// hip/knee/ankle for the left leg followed by the right leg. Rotations are
// about +y (x forward, z up), so positive pitch leans the torso forward and a
// positive hip angle swings the thigh backward.
enum Coord : int { kX = 0, kZ = 1, kPitch = 2, kJointBase = 3 };
enum Link : int { kTorso = 0, kLeftThigh, kLeftShank, kLeftFoot, kRightThigh, kRightShank, kRightFoot };
// Contact points: left heel, left toe, right heel, right toe.
inline constexpr int kContactPoints = 4;

struct LinkParams {
  double mass = 1.0;     // kg
  double length = 0.0;   // m, joint-to-joint along the link's -z axis
  double inertia = 0.0;  // kg m^2 about the center of mass
  double com_x = 0.0;    // center-of-mass offset in the link frame, m
  double com_z = 0.0;
};

struct JointParams {
  double kp = 0.0;            // N m / rad
  double kd = 0.0;            // N m s / rad
  double torque_limit = 0.0;  // N m
  double max_speed = 0.0;     // rad/s
  double max_power = 0.0;     // W
  double damping = 0.0;       // passive viscous damping, N m s / rad
  double nominal = 0.0;       // crouch pose angle, rad
  double action_scale = 0.0;  // PD target half-range around nominal, rad
};

struct ContactParams {
  double normal_stiffness = 1e5;      // N/m
  double normal_damping = 1e3;        // N s/m
  double tangential_stiffness = 2e4;  // N/m (stiction spring)
  double tangential_damping = 300.0;  // N s/m
  double nominal_friction = 0.8;      // used when dynamics randomization is off
};

/// Planar seven-link biped: torso plus thigh, shank, and foot per leg. Both
/// legs share the same parameters and attach at the hip point.
struct BipedModel {
  LinkParams torso;
  LinkParams thigh;
  LinkParams shank;
  LinkParams foot;
  double heel_x = 0.0, heel_z = 0.0;  // foot frame, m
  double toe_x = 0.0, toe_z = 0.0;
  std::array<JointParams, 3> joints;  // hip, knee, ankle
  ContactParams contact;
  double gravity = 9.81;

  [[nodiscard]] double total_mass() const;
  [[nodiscard]] const JointParams& joint(int index) const { return joints[static_cast<std::size_t>(index % 3)]; }
  [[nodiscard]] Vec6 nominal_pose() const;
  void validate() const;

  [[nodiscard]] static BipedModel default_model();
  [[nodiscard]] static BipedModel load(const std::string& path);
};

void to_json(nlohmann::json& j, const BipedModel& m);
void from_json(const nlohmann::json& j, BipedModel& m);

struct DynRandConfig {
  bool enabled = true;
  Range damping_scale{0.5, 3.5};
  Range mass_scale{0.5, 1.7};
  Range friction{0.5, 1.1};
  Range encoder_offset{-0.05, 0.05};
  Range rate_hz{37.0, 42.0};
  double nominal_rate_hz = 40.0;  // used when disabled

  void validate() const;
};

void to_json(nlohmann::json& j, const DynRandConfig& c);
void from_json(const nlohmann::json& j, DynRandConfig& c);

/// Per-episode dynamics perturbation. The execution rate is drawn from
/// `rate_hz` again at every control step.
struct DynRandSample {
  std::array<double, kJoints> damping_scale{};
  std::array<double, kLinks> mass_scale{};
  double friction = 0.8;
  std::array<double, kJoints> encoder_offset{};
  Range rate_hz{40.0, 40.0};

  [[nodiscard]] static DynRandSample identity(double friction = 0.8, double rate_hz = 40.0);
  [[nodiscard]] double draw_rate(Rng& rng) const;
};

[[nodiscard]] DynRandSample sample_dynamics(const DynRandConfig& config, std::uint64_t seed,
                                            double nominal_friction = 0.8);

struct ContactState {
  bool active = false;
  bool anchored = false;
  double anchor_x = 0.0, anchor_z = 0.0;
  double normal = 0.0;      // N, >= 0
  double tangential = 0.0;  // N, along the surface tangent
  double fx = 0.0, fz = 0.0;
  double depth = 0.0;
};

/// Ground reaction on one foot, heel and toe summed.
struct FootGrf {
  double tangential = 0.0;
  double normal = 0.0;
  double fx = 0.0;  // world horizontal
  double fz = 0.0;  // world vertical
};

struct SimState {
  Vec9 q = Vec9::Zero();
  Vec9 qd = Vec9::Zero();
  std::array<ContactState, kContactPoints> contacts{};
  std::array<FootGrf, 2> grf{};  // averaged over the last control step
  Vec2 pelvis_acc = Vec2::Zero();
  double time = 0.0;
};

struct Kinematics {
  Vec2 hip;
  std::array<Vec2, 2> knee, ankle;
  std::array<Vec2, kLinks> com;
  std::array<double, kLinks> angle{};
  std::array<double, kLinks> omega{};
  std::array<Mat29, kLinks> com_jacobian;
  std::array<Vec2, kLinks> com_bias_acc;  // acceleration at zero qdd
  std::array<Vec2, kContactPoints> point;
  std::array<Mat29, kContactPoints> point_jacobian;
};

struct Proprioception {
  std::array<double, 4> pelvis_quat{};   // (w, x, y, z), pitch only
  std::array<double, 3> pelvis_omega{};  // roll, pitch, yaw rates; only pitch nonzero
  Vec6 joint_pos = Vec6::Zero();
  Vec6 joint_vel = Vec6::Zero();
};

struct EnergySample {
  double t = 0.0;
  Vec6 torque = Vec6::Zero();
  Vec6 omega = Vec6::Zero();
};

struct ControlResult {
  SimState state;
  double elapsed = 0.0;
  int substeps = 0;
  Vec6 mean_torque = Vec6::Zero();
  std::vector<EnergySample> energy_samples;
  double max_depth = 0.0;
};

struct FootState {
  Vec2 position;  // sole midpoint
  Vec2 velocity;
  double pitch = 0.0;
};

/// Unit quaternion (w, x, y, z) for a rotation of `theta` about +y.
[[nodiscard]] std::array<double, 4> pitch_quaternion(double theta);

class Biped {
 public:
  explicit Biped(BipedModel model, DynRandSample sample = DynRandSample::identity());

  [[nodiscard]] const BipedModel& model() const { return model_; }
  [[nodiscard]] const DynRandSample& sample() const { return sample_; }
  [[nodiscard]] double total_mass() const;
  [[nodiscard]] double link_mass(int link) const { return mass_[static_cast<std::size_t>(link)]; }

  [[nodiscard]] Kinematics kinematics(const Vec9& q, const Vec9& qd) const;
  [[nodiscard]] Mat99 mass_matrix(const Kinematics& k) const;

  /// Applies |tau| <= tau_max * max(0, 1 - |w| / w_max) per joint.
  [[nodiscard]] Vec6 clamp_torques(const Vec6& tau, const Vec9& qd) const;
  /// PD law on encoder readings, clamped.
  [[nodiscard]] Vec6 pd_torques(const SimState& s, const Vec6& targets) const;

  /// One semi-implicit Euler step with compliant contact. Throws
  /// SimulationInstability on non-finite state or runaway penetration.
  [[nodiscard]] SimState step_inner(const SimState& s, const Vec6& joint_torques,
                                    const terrain::TerrainProfile& ground, double dt) const;

  /// Runs the PD loop at 2 kHz for 1/rate_hz seconds. Energy samples are
  /// recorded every `sample_every` substeps plus once at the end of the step.
  [[nodiscard]] ControlResult control_step(const SimState& s, const Vec6& targets, double rate_hz,
                                           const terrain::TerrainProfile& ground, int sample_every = 5) const;

  [[nodiscard]] double kinetic_energy(const SimState& s) const;
  [[nodiscard]] double potential_energy(const SimState& s) const;

  /// Standing state with the given joint angles, zero pitch, and the lowest
  /// contact point resting on the ground at pelvis x.
  [[nodiscard]] SimState standing_state(const terrain::TerrainProfile& ground, double x, const Vec6& joints) const;

  [[nodiscard]] Proprioception read_proprioception(const SimState& s) const;
  [[nodiscard]] std::array<FootGrf, 2> read_grf(const SimState& s) const { return s.grf; }
  [[nodiscard]] std::array<FootState, 2> feet(const SimState& s) const;

 private:
  BipedModel model_;
  DynRandSample sample_;
  std::array<double, kLinks> mass_{};
  std::array<double, kLinks> inertia_{};
  std::array<LinkParams, kLinks> link_{};
};

}  // namespace stairwalk::sim
