#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "stairwalk/env.hpp"
#include "stairwalk/nnet/gaussian.hpp"

namespace stairwalk::eval {

[[nodiscard]] std::vector<double> default_speed_grid();  // 0.25 .. 1.5 in 0.25 steps

struct TrialSpec {
  double rise = 0.17;
  double run = 0.30;
  int steps = 5;
  bool descend = false;
  std::vector<double> speeds = default_speed_grid();
  int trials = 150;
  std::uint64_t seed = 0;
  double approach = 1.0;         // level ground before the first riser
  double landing = 2.0;          // level ground after the last riser
  double success_margin = 0.5;   // pelvis must pass the last edge by this much
  bool randomize_dynamics = false;
  int workers = 1;

  void validate() const;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Wilson score interval for k successes in n trials.
[[nodiscard]] Interval wilson_interval(int successes, int trials, double z = 1.96);

struct SpeedResult {
  double speed = 0.0;
  int trials = 0;
  int successes = 0;
  int falls = 0;
  double rate = 0.0;
  Interval ci;
};

/// Deterministic (mean-action) trials on a fixed staircase, one seed per trial.
/// `base` supplies the reward and fall settings; terrain, command and
/// horizon are overridden per trial.
[[nodiscard]] std::vector<SpeedResult> success_sweep(const nnet::GaussianPolicy& policy,
                                                     const env::EpisodeConfig& base, const sim::BipedModel& model,
                                                     const TrialSpec& spec);

/// Outcome of one trial, exposed for tests.
struct TrialOutcome {
  bool success = false;
  bool fell = false;
  int steps = 0;
  double final_x = 0.0;
};
[[nodiscard]] TrialOutcome run_trial(const nnet::GaussianPolicy& policy, const env::EpisodeConfig& base,
                                     const sim::BipedModel& model, const TrialSpec& spec, double speed,
                                     std::uint64_t seed);

/// Runs the deterministic policy on `terrain` at a fixed forward command and
/// returns the recorded log.
[[nodiscard]] env::TrajectoryLog record_episode(const nnet::GaussianPolicy& policy, env::EpisodeConfig config,
                                                const sim::BipedModel& model,
                                                std::shared_ptr<const terrain::TerrainProfile> terrain, double speed,
                                                int horizon, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Energy

/// Trapezoid over the samples of
///   sum_i max(tau_i w_i, 0) + (w_i_max / P_i_max) tau_i^2.
[[nodiscard]] double motor_energy(const std::vector<sim::EnergySample>& samples,
                                  const std::array<double, sim::kJoints>& max_speed,
                                  const std::array<double, sim::kJoints>& max_power);
/// Same, over every energy sample of the log. Throws when samples are missing.
[[nodiscard]] double motor_energy(const env::TrajectoryLog& log);
/// Only samples with t0 <= t <= t1.
[[nodiscard]] double motor_energy(const env::TrajectoryLog& log, double t0, double t1);

struct CotOptions {
  double discard = 2.0;  // seconds dropped at each end of the log
};

struct CotResult {
  double cot = 0.0;
  double energy = 0.0;
  double distance = 0.0;
  double mass = 0.0;
  double t0 = 0.0, t1 = 0.0;
};

/// E_m / (M g d) over the steady-state window. Throws NumericalError when the
/// pelvis made no forward progress and Error when the log is too short.
[[nodiscard]] CotResult cost_of_transport(const env::TrajectoryLog& log, const CotOptions& opt = {});
[[nodiscard]] double cost_of_transport(double energy, double mass, double gravity, double distance);

// ---------------------------------------------------------------------------
// Gait analysis

struct GaitOptions {
  double touchdown_force = 5.0;  // N, vertical force marking contact
  int path_samples = 50;         // swing path resampling
};

struct GaitAnalysis {
  int foot = 0;
  double touchdown_time = 0.0;
  double liftoff_time = 0.0;
  double ground_change = 0.0;  // terrain height at touchdown minus before the event
  std::vector<double> time;    // relative to touchdown
  std::vector<double> fx, fz;
  std::vector<double> impulse_x, impulse_z;  // cumulative, trapezoid

  [[nodiscard]] double vertical_impulse() const { return impulse_z.empty() ? 0.0 : impulse_z.back(); }
  [[nodiscard]] double horizontal_impulse() const { return impulse_x.empty() ? 0.0 : impulse_x.back(); }
  [[nodiscard]] nlohmann::ordered_json to_json() const;
};

/// Stance phase of the first touchdown with the sole at or beyond `event_x`.
/// Throws Error when no such touchdown exists.
[[nodiscard]] GaitAnalysis grf_analysis(const env::TrajectoryLog& log, double event_x, const GaitOptions& opt = {});

/// Total vertical impulse of both feet over [t0, t1] (trapezoid).
[[nodiscard]] double vertical_impulse(const env::TrajectoryLog& log, double t0, double t1);

struct SwingMetrics {
  int foot = 0;
  double liftoff_time = 0.0;
  double touchdown_time = 0.0;
  std::vector<double> phase;  // normalized swing time in [0, 1]
  std::vector<double> x, z;   // sole path; x from liftoff, z above the local ground
  double apex_clearance = 0.0;
  std::vector<double> leg_time, leg_angle;  // raw samples over the swing
  double retraction_rate = 0.0;             // rad/s over the final descent, < 0 means rearward

  [[nodiscard]] nlohmann::ordered_json to_json() const;
};

/// Swing phase ending in the first touchdown at or beyond `event_x`. Throws
/// Error when the log has no airborne phase.
[[nodiscard]] SwingMetrics swing_metrics(const env::TrajectoryLog& log, double event_x, const GaitOptions& opt = {});

// ---------------------------------------------------------------------------
// Output

[[nodiscard]] std::string success_csv(const std::vector<SpeedResult>& rows);
[[nodiscard]] std::string cot_csv(const std::vector<std::pair<std::string, CotResult>>& rows);

}  // namespace stairwalk::eval
