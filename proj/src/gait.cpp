#include "stairwalk/gait.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>

namespace stairwalk::gait {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// 8-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr std::array<double, 8> kGlNodes = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                            -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                            0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGlWeights = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                              0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                              0.2223810344533745, 0.1012285362903763};

const VonMisesCdf& cached_cdf(double kappa) {
  thread_local std::map<double, std::unique_ptr<VonMisesCdf>> cache;
  auto it = cache.find(kappa);
  if (it == cache.end()) it = cache.emplace(kappa, std::make_unique<VonMisesCdf>(kappa)).first;
  return *it->second;
}

double dot(const Quat& a, const Quat& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]; }

void check_unit(const Quat& q, const char* name) {
  for (double v : q)
    if (!std::isfinite(v)) throw NumericalError(std::string("reward: non-finite quaternion ") + name);
  if (std::abs(dot(q, q) - 1.0) > 1e-6) throw NumericalError(std::string("reward: quaternion ") + name + " is not unit");
}

void check_magnitude(double v, const char* name) {
  if (!std::isfinite(v)) throw NumericalError(std::string("reward: non-finite input ") + name);
  if (v < 0.0) throw NumericalError(std::string("reward: negative magnitude ") + name);
}

}  // namespace

void GaitClock::advance(double delta) { phase = advance_phase(phase, std::clamp(delta, min_delta(), max_delta())); }

std::pair<double, double> clock_inputs(double phase) {
  return {std::sin(kTwoPi * (phase + 0.0)), std::sin(kTwoPi * (phase + 0.5))};
}

double advance_phase(double phase, double delta) {
  double p = std::fmod(phase + delta, 1.0);
  if (p < 0.0) p += 1.0;
  if (p >= 1.0) p = 0.0;
  return p;
}

VonMisesCdf::VonMisesCdf(double kappa, int cells) : kappa_(kappa), cells_(cells) {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw ConfigError("Von Mises concentration must be > 0");
  if (cells < 2) throw ConfigError("Von Mises table needs at least two cells");
  cumulative_.resize(static_cast<std::size_t>(cells) + 1, 0.0);
  const double h = 1.0 / cells;
  for (int i = 0; i < cells; ++i) {
    const double a = -0.5 + i * h;
    cumulative_[static_cast<std::size_t>(i) + 1] = cumulative_[static_cast<std::size_t>(i)] + integrate(a, a + h);
  }
  total_ = cumulative_.back();
}

double VonMisesCdf::density(double t) const { return std::exp(kappa_ * (std::cos(kTwoPi * t) - 1.0)); }

double VonMisesCdf::integrate(double a, double b) const {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double s = 0.0;
  for (std::size_t i = 0; i < kGlNodes.size(); ++i) s += kGlWeights[i] * density(mid + half * kGlNodes[i]);
  return s * half;
}

double VonMisesCdf::operator()(double x) const {
  if (x <= -0.5) return 0.0;
  if (x >= 0.5) return 1.0;
  const double h = 1.0 / cells_;
  const int i = std::min(static_cast<int>((x + 0.5) / h), cells_ - 1);
  const double a = -0.5 + i * h;
  return std::clamp((cumulative_[static_cast<std::size_t>(i)] + integrate(a, x)) / total_, 0.0, 1.0);
}

void PhaseIndicatorSpec::validate() const {
  if (!(start >= 0.0 && start < end && end <= 1.0)) throw ConfigError("phase indicator needs 0 <= start < end <= 1");
  if (!(kappa > 0.0)) throw ConfigError("phase indicator needs kappa > 0");
}

double indicator_expectation(const PhaseIndicatorSpec& spec, double phase) {
  spec.validate();
  const VonMisesCdf& cdf = cached_cdf(spec.kappa);
  const double half = 0.5 * (spec.end - spec.start);
  const double mid = 0.5 * (spec.start + spec.end);
  // Offset from the interval midpoint, wrapped to [-0.5, 0.5).
  double u = std::fmod(phase - mid, 1.0);
  if (u < -0.5) u += 1.0;
  if (u >= 0.5) u -= 1.0;
  return cdf(u + half) * cdf(half - u);
}

IndicatorSet IndicatorSet::with_kappa(double kappa) {
  IndicatorSet s;
  s.left_force.kappa = s.right_force.kappa = s.left_velocity.kappa = s.right_velocity.kappa = kappa;
  return s;
}

double RewardWeights::sum() const {
  return left_force + right_force + left_velocity + right_velocity + orientation + forward_velocity +
         sideways_velocity + action_smoothness + torque + pelvis_motion;
}

void RewardWeights::validate() const {
  const double ws[] = {left_force,       right_force,       left_velocity, right_velocity, orientation,
                       forward_velocity, sideways_velocity, action_smoothness, torque,      pelvis_motion};
  for (double w : ws)
    if (!(w > 0.0)) throw ConfigError("reward weights must be > 0");
  const double scales[] = {force_scale, velocity_scale, action_scale, torque_scale, pelvis_scale,
                           orientation_body, orientation_feet};
  for (double s : scales)
    if (!(s >= 0.0)) throw ConfigError("reward scale constants must be >= 0");
}

void to_json(nlohmann::json& j, const RewardWeights& w) {
  j = nlohmann::json{{"left_force", w.left_force},
                     {"right_force", w.right_force},
                     {"left_velocity", w.left_velocity},
                     {"right_velocity", w.right_velocity},
                     {"orientation", w.orientation},
                     {"forward_velocity", w.forward_velocity},
                     {"sideways_velocity", w.sideways_velocity},
                     {"action_smoothness", w.action_smoothness},
                     {"torque", w.torque},
                     {"pelvis_motion", w.pelvis_motion},
                     {"force_scale", w.force_scale},
                     {"velocity_scale", w.velocity_scale},
                     {"action_scale", w.action_scale},
                     {"torque_scale", w.torque_scale},
                     {"pelvis_scale", w.pelvis_scale},
                     {"orientation_body", w.orientation_body},
                     {"orientation_feet", w.orientation_feet}};
}

void from_json(const nlohmann::json& j, RewardWeights& w) {
  RewardWeights r;
  auto take = [&](const char* key, double& dst) {
    if (j.contains(key)) dst = j.at(key).get<double>();
  };
  take("left_force", r.left_force);
  take("right_force", r.right_force);
  take("left_velocity", r.left_velocity);
  take("right_velocity", r.right_velocity);
  take("orientation", r.orientation);
  take("forward_velocity", r.forward_velocity);
  take("sideways_velocity", r.sideways_velocity);
  take("action_smoothness", r.action_smoothness);
  take("torque", r.torque);
  take("pelvis_motion", r.pelvis_motion);
  take("force_scale", r.force_scale);
  take("velocity_scale", r.velocity_scale);
  take("action_scale", r.action_scale);
  take("torque_scale", r.torque_scale);
  take("pelvis_scale", r.pelvis_scale);
  take("orientation_body", r.orientation_body);
  take("orientation_feet", r.orientation_feet);
  r.validate();
  w = r;
}

double orientation_error(const Quat& target, const Quat& body, const Quat& left, const Quat& right,
                         const RewardWeights& w) {
  check_unit(target, "target");
  check_unit(body, "body");
  check_unit(left, "left foot");
  check_unit(right, "right foot");
  const double eb = 1.0 - dot(target, body);
  const double el = 1.0 - dot(target, left);
  const double er = 1.0 - dot(target, right);
  return w.orientation_body * eb * eb + w.orientation_feet * (el * el + er * er);
}

RewardBreakdown reward(const RewardInputs& in, double phase, const RewardWeights& w, const IndicatorSet& specs) {
  check_magnitude(in.left_force, "left_force");
  check_magnitude(in.right_force, "right_force");
  check_magnitude(in.left_foot_speed, "left_foot_speed");
  check_magnitude(in.right_foot_speed, "right_foot_speed");
  check_magnitude(in.pelvis_rotation, "pelvis_rotation");
  check_magnitude(in.pelvis_acceleration, "pelvis_acceleration");
  const double speeds[] = {in.forward_speed_desired, in.forward_speed_actual, in.sideways_speed_desired,
                           in.sideways_speed_actual, phase};
  for (double v : speeds)
    if (!std::isfinite(v)) throw NumericalError("reward: non-finite speed or phase");
  if (in.action.size() != in.previous_action.size()) throw ShapeError("reward: action sizes differ");
  if (!in.action.allFinite() || !in.previous_action.allFinite() || !in.torque.allFinite())
    throw NumericalError("reward: non-finite action or torque");

  RewardBreakdown out;
  auto& c = out.cost;
  c[0] = 1.0 - indicator_expectation(specs.left_force, phase) * std::exp(-w.force_scale * in.left_force);
  c[1] = 1.0 - indicator_expectation(specs.right_force, phase) * std::exp(-w.force_scale * in.right_force);
  c[2] = 1.0 - indicator_expectation(specs.left_velocity, phase) * std::exp(-w.velocity_scale * in.left_foot_speed);
  c[3] = 1.0 - indicator_expectation(specs.right_velocity, phase) * std::exp(-w.velocity_scale * in.right_foot_speed);
  c[4] = 1.0 - std::exp(-orientation_error(in.target_orientation, in.body_orientation, in.left_foot_orientation,
                                           in.right_foot_orientation, w));
  c[5] = 1.0 - std::exp(-std::abs(in.forward_speed_desired - in.forward_speed_actual));
  c[6] = 1.0 - std::exp(-std::abs(in.sideways_speed_desired - in.sideways_speed_actual));
  c[7] = 1.0 - std::exp(-w.action_scale * (in.action - in.previous_action).norm());
  c[8] = 1.0 - std::exp(-w.torque_scale * in.torque.norm());
  c[9] = 1.0 - std::exp(-w.pelvis_scale * (in.pelvis_rotation + in.pelvis_acceleration));

  const double weights[kRewardTerms] = {w.left_force,       w.right_force,       w.left_velocity, w.right_velocity,
                                        w.orientation,      w.forward_velocity,  w.sideways_velocity,
                                        w.action_smoothness, w.torque,           w.pelvis_motion};
  for (int i = 0; i < kRewardTerms; ++i) {
    out.weighted[static_cast<std::size_t>(i)] = weights[i] * c[static_cast<std::size_t>(i)];
    out.penalty += out.weighted[static_cast<std::size_t>(i)];
  }
  out.reward = 1.0 - out.penalty;
  return out;
}

}  // namespace stairwalk::gait
