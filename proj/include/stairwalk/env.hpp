#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "stairwalk/common.hpp"
#include "stairwalk/gait.hpp"
#include "stairwalk/simworld.hpp"
#include "stairwalk/terrain.hpp"

namespace stairwalk::env {

enum class Variant { flat_ground, stair, proximity };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct Command {
  double forward = 0.0;   // m/s
  double sideways = 0.0;  // m/s, kept for layout parity; the planar body cannot follow it
  double turn = 0.0;      // rad/s, same
};

struct CommandRanges {
  Range forward{-0.3, 1.5};
  Range sideways{-0.3, 0.3};
  Range turn{-1.5707963267948966, 1.5707963267948966};
  double resample_probability = 1.0 / 300.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const CommandRanges& c);
void from_json(const nlohmann::json& j, CommandRanges& c);

/// Per-step command randomization: each field is independently redrawn from
/// its range with the resample probability.
struct CommandSchedule {
  CommandRanges ranges;

  [[nodiscard]] Command sample(Rng& rng) const;
  /// One control step; returns which fields were redrawn.
  std::array<bool, 3> step(Rng& rng, Command& command) const;
};

// Observation index map. The proximity bit is appended only for the
// proximity variant.
struct ObsLayout {
  static constexpr int kQuat = 0;        // 4: (w, x, y, z)
  static constexpr int kOmega = 4;       // 3: roll, pitch, yaw rates
  static constexpr int kJointPos = 7;    // 6: left hip/knee/ankle, right hip/knee/ankle
  static constexpr int kJointVel = 13;   // 6
  static constexpr int kCommand = 19;    // 3: forward, sideways, turn
  static constexpr int kClock = 22;      // 2: p1, p2
  static constexpr int kProximity = 24;  // 1, optional
  static constexpr int kBaseSize = 24;
  static constexpr int kVersion = 1;

  bool proximity = false;

  [[nodiscard]] int size() const { return proximity ? kBaseSize + 1 : kBaseSize; }
  /// Hash of the version and index map; stored in checkpoints.
  [[nodiscard]] std::uint64_t checksum() const;
};

inline constexpr int kActionSize = 7;  // six PD targets + clock delta

/// Signed permutation y[i] = sign[i] * x[perm[i]].
struct SignedPermutation {
  std::vector<int> perm;
  std::vector<double> sign;

  [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  /// Row-wise application to a batch stored one sample per row.
  [[nodiscard]] Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& x) const;
  [[nodiscard]] bool is_involution() const;
  [[nodiscard]] int size() const { return static_cast<int>(perm.size()); }
};

struct MirrorMaps {
  SignedPermutation observation;
  SignedPermutation action;

  [[nodiscard]] static MirrorMaps for_layout(const ObsLayout& layout);
  [[nodiscard]] Eigen::VectorXd mirror_observation(const Eigen::VectorXd& obs) const;
  [[nodiscard]] Eigen::VectorXd mirror_action(const Eigen::VectorXd& act) const;
};

struct EpisodeConfig {
  Variant variant = Variant::stair;
  int horizon = 300;
  terrain::StairGenConfig terrain;
  sim::DynRandConfig dynamics;
  CommandRanges commands;
  double joint_jitter = 0.03;       // rad, uniform
  double fall_height_ratio = 0.55;  // of the nominal standing pelvis height
  double fall_pitch = 1.0;          // rad
  double proximity_radius = 1.0;    // m
  gait::RewardWeights weights;
  double kappa = 32.0;

  // Evaluation overrides.
  std::shared_ptr<const terrain::TerrainProfile> fixed_terrain;
  std::optional<Command> fixed_command;
  bool resample_commands = true;
  double start_x = 0.0;

  void validate() const;
  [[nodiscard]] ObsLayout layout() const { return ObsLayout{variant == Variant::proximity}; }
};

void to_json(nlohmann::json& j, const EpisodeConfig& c);
void from_json(const nlohmann::json& j, EpisodeConfig& c);

enum class Termination { none, horizon, fall, instability };
std::string to_string(Termination t);

struct StepInfo {
  gait::RewardBreakdown breakdown;
  std::array<sim::FootGrf, 2> grf{};
  Termination termination = Termination::none;
  std::array<bool, 3> command_resampled{};
  double phase = 0.0;
  double elapsed = 0.0;
  double rate_hz = 0.0;
  double max_depth = 0.0;
};

struct StepResult {
  Eigen::VectorXd observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// One control-step record; a full episode is a TrajectoryLog.
struct LogStep {
  double time = 0.0;  // at the end of the step
  sim::Vec9 q = sim::Vec9::Zero();
  sim::Vec9 qd = sim::Vec9::Zero();
  Eigen::VectorXd action;
  sim::Vec6 torque = sim::Vec6::Zero();  // step mean
  std::array<sim::FootGrf, 2> grf{};
  std::array<sim::FootState, 2> feet{};
  std::array<double, 2> foot_ground{};  // terrain height under each sole midpoint
  double ground = 0.0;                  // terrain height under the pelvis
  double phase = 0.0;
  double reward = 0.0;
  std::array<double, gait::kRewardTerms> terms{};
  std::vector<sim::EnergySample> energy;  // absolute times
};

struct TrajectoryLog {
  double total_mass = 0.0;
  double gravity = 9.81;
  std::array<double, sim::kJoints> max_speed{};
  std::array<double, sim::kJoints> max_power{};
  sim::Vec9 initial_q = sim::Vec9::Zero();
  double initial_time = 0.0;
  std::string termination = "none";
  std::vector<LogStep> steps;

  void write_jsonl(const std::string& path) const;
  [[nodiscard]] static TrajectoryLog read_jsonl(const std::string& path);
};

class Env {
 public:
  explicit Env(EpisodeConfig config, sim::BipedModel model = sim::BipedModel::default_model());

  /// Starts a fresh episode. Terrain, dynamics sample, initial pose, and
  /// command all derive from `seed`.
  Eigen::VectorXd reset(std::uint64_t seed);
  StepResult step(const Eigen::VectorXd& action);

  [[nodiscard]] const EpisodeConfig& config() const { return config_; }
  [[nodiscard]] ObsLayout layout() const { return layout_; }
  [[nodiscard]] const MirrorMaps& mirror() const { return mirror_; }
  [[nodiscard]] bool done() const { return done_; }
  [[nodiscard]] int steps() const { return step_count_; }
  [[nodiscard]] const sim::SimState& state() const { return state_; }
  [[nodiscard]] const terrain::TerrainProfile& terrain() const { return *terrain_; }
  [[nodiscard]] const sim::Biped& biped() const { return *biped_; }
  [[nodiscard]] const Command& command() const { return command_; }
  [[nodiscard]] double phase() const { return clock_.phase; }
  [[nodiscard]] std::array<int, 3> resample_counts() const { return resample_counts_; }
  [[nodiscard]] double nominal_height() const { return nominal_height_; }
  [[nodiscard]] Termination termination() const { return termination_; }

  /// Episode log for the current episode; recording must be enabled before reset.
  void set_recording(bool on) { recording_ = on; }
  [[nodiscard]] const TrajectoryLog& log() const { return log_; }

  /// Maps a clipped network action to joint PD targets.
  [[nodiscard]] sim::Vec6 pd_targets(const Eigen::VectorXd& action) const;
  /// Maps the last action entry to a phase increment inside the allowed band.
  [[nodiscard]] double phase_delta(double raw) const;

  [[nodiscard]] Eigen::VectorXd observe() const;
  [[nodiscard]] bool fallen(const sim::SimState& s) const;

 private:
  EpisodeConfig config_;
  sim::BipedModel model_;
  ObsLayout layout_;
  MirrorMaps mirror_;
  double nominal_height_ = 0.0;

  std::shared_ptr<const terrain::TerrainProfile> terrain_;
  std::unique_ptr<sim::Biped> biped_;
  sim::SimState state_;
  gait::GaitClock clock_;
  gait::IndicatorSet indicators_;
  Command command_;
  Rng rng_{0};
  Eigen::VectorXd previous_action_;
  std::array<int, 3> resample_counts_{};
  int step_count_ = 0;
  bool done_ = true;
  Termination termination_ = Termination::none;
  bool recording_ = false;
  TrajectoryLog log_;
};

}  // namespace stairwalk::env
