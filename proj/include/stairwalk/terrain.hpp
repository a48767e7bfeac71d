#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "stairwalk/common.hpp"

namespace stairwalk::terrain {

enum class StairDirection { ascend, descend, both };

std::string to_string(StairDirection d);
StairDirection direction_from_string(std::string_view s);

/// Ranges for procedurally generated staircases. Heights and lengths are in
/// meters, inclines in radians.
struct StairGenConfig {
  Range rise{0.10, 0.21};
  Range run{0.24, 0.30};
  double per_step_noise = 0.01;
  IntRange step_count{1, 8};
  Range approach_distance{0.0, 10.0};
  Range incline{-0.03, 0.03};
  Range landing_length{0.5, 2.0};
  StairDirection direction = StairDirection::both;
  /// Probability that the episode begins on the landing above the stairs.
  double on_top_probability = 0.2;
  /// Give each tread its own small pitch (off by default).
  bool inclined_steps = false;
  double step_pitch_max = 0.03;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  [[nodiscard]] static StairGenConfig flat();
};

void to_json(nlohmann::json& j, const StairGenConfig& c);
void from_json(const nlohmann::json& j, StairGenConfig& c);

struct Breakpoint {
  double x = 0.0;
  double z = 0.0;
};

struct StairMetadata {
  std::uint64_t seed = 0;
  int step_count = 0;
  bool descending = false;
  bool on_top = false;
  std::vector<double> rises;  // signed height change of each riser
  std::vector<double> runs;   // tread depths between consecutive risers
  std::vector<double> tread_pitches;
  double stairs_start_x = 0.0;  // first riser
  double stairs_end_x = 0.0;    // last riser
  double landing_length = 0.0;
  double incline_before = 0.0;  // radians
  double incline_after = 0.0;   // radians
};

/// Contact query result against the ground polyline.
struct GroundContact {
  bool inside = false;
  double depth = 0.0;
  double nx = 0.0;  // outward surface normal
  double nz = 1.0;
};

/// Piecewise-linear ground height over x. Consecutive breakpoints sharing an x
/// coordinate form a vertical riser; elsewhere x is strictly increasing.
/// Outside the breakpoints the profile extends along the boundary segments.
class TerrainProfile {
 public:
  TerrainProfile() = default;
  TerrainProfile(std::vector<Breakpoint> points, StairMetadata meta);

  [[nodiscard]] const std::vector<Breakpoint>& breakpoints() const { return points_; }
  [[nodiscard]] const StairMetadata& metadata() const { return meta_; }

  /// Ground height. At a riser the upper tread is returned.
  [[nodiscard]] double height_at(double x) const;

  /// x coordinates of every vertical riser, ascending.
  [[nodiscard]] std::vector<double> riser_positions() const;

  /// Horizontal distance to the closest riser ahead of or behind x; +inf when
  /// there is none within the horizon.
  [[nodiscard]] double distance_to_next_elevation_change(
      double x, double horizon = std::numeric_limits<double>::infinity()) const;

  /// Penetration of a point below the surface, measured to the nearest
  /// surface segment (treads, inclines, and riser faces).
  [[nodiscard]] GroundContact contact(double px, double pz) const;

  bool operator==(const TerrainProfile& other) const;

 private:
  std::vector<Breakpoint> points_;
  StairMetadata meta_;
  std::vector<double> risers_;
};

/// Proximity bit: 1 when an elevation change lies within `radius` of x.
[[nodiscard]] int proximity_bit(const TerrainProfile& profile, double x, double radius = 1.0);

[[nodiscard]] TerrainProfile generate(const StairGenConfig& config, std::uint64_t seed);

/// Fixed-geometry staircase used by the evaluation trials.
[[nodiscard]] TerrainProfile make_staircase(double rise, double run, int steps, double approach,
                                            double landing, bool descending);
/// A single ledge of signed height `dz` at `x_edge` on level ground.
[[nodiscard]] TerrainProfile make_ledge(double x_edge, double dz);
/// Straight incline through the origin.
[[nodiscard]] TerrainProfile make_incline(double angle);

inline constexpr int kFormatVersion = 1;

[[nodiscard]] std::string export_profile(const TerrainProfile& profile);
[[nodiscard]] TerrainProfile import_profile(std::string_view text);

}  // namespace stairwalk::terrain
