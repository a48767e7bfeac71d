#pragma once

#include <array>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "stairwalk/common.hpp"

namespace stairwalk::gait {

using Quat = std::array<double, 4>;  // (w, x, y, z)

inline constexpr double kNominalCycleSeconds = 0.7;
inline constexpr double kNominalControlRateHz = 40.0;

/// Cyclic phase and its per-step increment bounds.
struct GaitClock {
  double phase = 0.0;
  double cycle_seconds = kNominalCycleSeconds;
  double control_period = 1.0 / kNominalControlRateHz;
  Range delta_multiplier{0.5, 1.5};

  [[nodiscard]] double nominal_delta() const { return control_period / cycle_seconds; }
  [[nodiscard]] double min_delta() const { return delta_multiplier.lo * nominal_delta(); }
  [[nodiscard]] double max_delta() const { return delta_multiplier.hi * nominal_delta(); }
  /// Clamps `delta` into the allowed band and advances the phase.
  void advance(double delta);
};

/// (sin 2pi(phase), sin 2pi(phase + 0.5)) for the left and right legs.
[[nodiscard]] std::pair<double, double> clock_inputs(double phase);

/// fmod(phase + delta, 1) mapped into [0, 1).
[[nodiscard]] double advance_phase(double phase, double delta);

/// CDF of a Von Mises distribution with concentration kappa, expressed in
/// phase units (one cycle = 1) and centered at 0. Arguments beyond half a
/// cycle saturate to 0 or 1. Construction tabulates the integral once.
class VonMisesCdf {
 public:
  explicit VonMisesCdf(double kappa, int cells = 2048);
  [[nodiscard]] double operator()(double x) const;
  [[nodiscard]] double kappa() const { return kappa_; }

 private:
  [[nodiscard]] double density(double t) const;
  [[nodiscard]] double integrate(double a, double b) const;

  double kappa_;
  int cells_;
  double total_ = 1.0;
  std::vector<double> cumulative_;
};

enum class IndicatorKind { left_force, right_force, left_velocity, right_velocity };

struct PhaseIndicatorSpec {
  IndicatorKind kind = IndicatorKind::left_force;
  double start = 0.0;
  double end = 0.5;
  double kappa = 32.0;

  void validate() const;
};

/// Expected value of the indicator whose interval boundaries are independently
/// perturbed by Von Mises noise: P(start + X <= phase < end + Y), evaluated on
/// the interval copy nearest to the phase.
[[nodiscard]] double indicator_expectation(const PhaseIndicatorSpec& spec, double phase);

struct IndicatorSet {
  PhaseIndicatorSpec left_force{IndicatorKind::left_force, 0.0, 0.5, 32.0};
  PhaseIndicatorSpec right_force{IndicatorKind::right_force, 0.5, 1.0, 32.0};
  PhaseIndicatorSpec left_velocity{IndicatorKind::left_velocity, 0.5, 1.0, 32.0};
  PhaseIndicatorSpec right_velocity{IndicatorKind::right_velocity, 0.0, 0.5, 32.0};

  [[nodiscard]] static IndicatorSet with_kappa(double kappa);
};

struct RewardInputs {
  double left_force = 0.0;  // N, magnitude
  double right_force = 0.0;
  double left_foot_speed = 0.0;  // m/s, magnitude
  double right_foot_speed = 0.0;
  Quat target_orientation{1.0, 0.0, 0.0, 0.0};
  Quat body_orientation{1.0, 0.0, 0.0, 0.0};
  Quat left_foot_orientation{1.0, 0.0, 0.0, 0.0};
  Quat right_foot_orientation{1.0, 0.0, 0.0, 0.0};
  double forward_speed_desired = 0.0;
  double forward_speed_actual = 0.0;
  double sideways_speed_desired = 0.0;
  double sideways_speed_actual = 0.0;
  Eigen::VectorXd action;
  Eigen::VectorXd previous_action;
  Eigen::VectorXd torque;
  double pelvis_rotation = 0.0;      // rad/s, magnitude
  double pelvis_acceleration = 0.0;  // m/s^2, magnitude
};

struct RewardWeights {
  double left_force = 0.140;
  double right_force = 0.140;
  double left_velocity = 0.140;
  double right_velocity = 0.140;
  double orientation = 0.140;
  double forward_velocity = 0.140;
  double sideways_velocity = 0.078;
  double action_smoothness = 0.028;
  double torque = 0.028;
  double pelvis_motion = 0.028;

  double force_scale = 0.01;
  double velocity_scale = 1.0;
  double action_scale = 5.0;
  double torque_scale = 0.05;
  double pelvis_scale = 0.1;
  double orientation_body = 3.0;
  double orientation_feet = 10.0;

  [[nodiscard]] double sum() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const RewardWeights& w);
void from_json(const nlohmann::json& j, RewardWeights& w);

inline constexpr int kRewardTerms = 10;
inline constexpr std::array<std::string_view, kRewardTerms> kRewardTermNames = {
    "left_force",        "right_force", "left_velocity", "right_velocity", "orientation",
    "forward_velocity",  "sideways_velocity", "action_smoothness", "torque", "pelvis_motion"};

struct RewardBreakdown {
  std::array<double, kRewardTerms> cost{};      // unweighted term values in [0, 1]
  std::array<double, kRewardTerms> weighted{};  // weight * cost
  double penalty = 0.0;
  double reward = 1.0;
};

/// 3(1 - q^T q_body)^2 + 10((1 - q^T q_l)^2 + (1 - q^T q_r)^2).
[[nodiscard]] double orientation_error(const Quat& target, const Quat& body, const Quat& left, const Quat& right,
                                       const RewardWeights& w = {});

/// R = 1 - sum_i w_i * cost_i.
[[nodiscard]] RewardBreakdown reward(const RewardInputs& in, double phase, const RewardWeights& w = {},
                                     const IndicatorSet& specs = {});

}  // namespace stairwalk::gait
