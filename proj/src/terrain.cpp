#include "stairwalk/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stairwalk::terrain {

namespace {

constexpr double kLeadIn = 20.0;   // ground extent behind the start / stairs
constexpr double kTrailOut = 30.0; // ground extent after the landing

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("terrain config: " + what);
}

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

Range range_from(const nlohmann::json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2) throw ConfigError(std::string("terrain config: '") + key + "' must be [lo, hi]");
  return Range{a[0].get<double>(), a[1].get<double>()};
}

struct SegmentDistance {
  double dist2;
  double nx, nz;
};

// Squared distance from p to segment a-b. The boundary segments are treated as
// rays so the extrapolated ground is part of the surface.
SegmentDistance segment_distance(const Breakpoint& a, const Breakpoint& b, double px, double pz,
                                 bool open_before, bool open_after) {
  const double dx = b.x - a.x;
  const double dz = b.z - a.z;
  const double len2 = dx * dx + dz * dz;
  double t = len2 > 0.0 ? ((px - a.x) * dx + (pz - a.z) * dz) / len2 : 0.0;
  if (!open_before) t = std::max(t, 0.0);
  if (!open_after) t = std::min(t, 1.0);
  const double cx = a.x + t * dx;
  const double cz = a.z + t * dz;
  SegmentDistance out{(px - cx) * (px - cx) + (pz - cz) * (pz - cz), 0.0, 1.0};
  if (dx > 0.0) {
    const double len = std::sqrt(len2);
    out.nx = -dz / len;
    out.nz = dx / len;
  } else {
    // Vertical riser: the outward normal faces the lower tread.
    out.nx = dz > 0.0 ? -1.0 : 1.0;
    out.nz = 0.0;
  }
  return out;
}

}  // namespace

std::string to_string(StairDirection d) {
  switch (d) {
    case StairDirection::ascend: return "ascend";
    case StairDirection::descend: return "descend";
    case StairDirection::both: return "both";
  }
  return "both";
}

StairDirection direction_from_string(std::string_view s) {
  if (s == "ascend") return StairDirection::ascend;
  if (s == "descend") return StairDirection::descend;
  if (s == "both") return StairDirection::both;
  throw ConfigError("terrain config: unknown direction '" + std::string(s) + "'");
}

void StairGenConfig::validate() const {
  require(rise.ordered(), "rise_range must satisfy lo <= hi");
  require(run.ordered(), "run_range must satisfy lo <= hi");
  require(approach_distance.ordered(), "approach_distance_range must satisfy lo <= hi");
  require(incline.ordered(), "incline_range must satisfy lo <= hi");
  require(landing_length.ordered(), "landing_length_range must satisfy lo <= hi");
  require(step_count.lo <= step_count.hi, "step_count_range must satisfy lo <= hi");
  require(step_count.lo >= 0, "step_count_range must be nonnegative");
  require(per_step_noise >= 0.0, "per_step_noise must be >= 0");
  require(rise.lo - per_step_noise > 0.0, "rise_range minus noise must stay positive");
  require(run.lo - per_step_noise > 0.0, "run_range minus noise must stay positive");
  require(landing_length.lo > 0.0, "landing_length_range must be positive");
  require(approach_distance.lo >= 0.0, "approach_distance_range must be nonnegative");
  require(std::abs(incline.lo) < 1.0 && std::abs(incline.hi) < 1.0, "incline_range must be within (-1, 1) rad");
  require(on_top_probability >= 0.0 && on_top_probability <= 1.0, "on_top_probability must be in [0, 1]");
  require(step_pitch_max >= 0.0 && step_pitch_max < 1.0, "step_pitch_max must be in [0, 1)");
}

StairGenConfig StairGenConfig::flat() {
  StairGenConfig c;
  c.step_count = {0, 0};
  return c;
}

void to_json(nlohmann::json& j, const StairGenConfig& c) {
  j = nlohmann::json{
      {"rise_range", range_json(c.rise)},
      {"run_range", range_json(c.run)},
      {"per_step_noise", c.per_step_noise},
      {"step_count_range", nlohmann::json::array({c.step_count.lo, c.step_count.hi})},
      {"approach_distance_range", range_json(c.approach_distance)},
      {"incline_range", range_json(c.incline)},
      {"landing_length_range", range_json(c.landing_length)},
      {"direction", to_string(c.direction)},
      {"on_top_probability", c.on_top_probability},
      {"inclined_steps", c.inclined_steps},
      {"step_pitch_max", c.step_pitch_max},
  };
}

void from_json(const nlohmann::json& j, StairGenConfig& c) {
  if (!j.is_object()) throw ConfigError("terrain config: expected an object");
  StairGenConfig d;
  try {
    if (j.contains("rise_range")) d.rise = range_from(j, "rise_range");
    if (j.contains("run_range")) d.run = range_from(j, "run_range");
    if (j.contains("per_step_noise")) d.per_step_noise = j.at("per_step_noise").get<double>();
    if (j.contains("step_count_range")) {
      const auto& a = j.at("step_count_range");
      if (!a.is_array() || a.size() != 2) throw ConfigError("terrain config: 'step_count_range' must be [lo, hi]");
      d.step_count = {a[0].get<int>(), a[1].get<int>()};
    }
    if (j.contains("approach_distance_range")) d.approach_distance = range_from(j, "approach_distance_range");
    if (j.contains("incline_range")) d.incline = range_from(j, "incline_range");
    if (j.contains("landing_length_range")) d.landing_length = range_from(j, "landing_length_range");
    if (j.contains("direction")) d.direction = direction_from_string(j.at("direction").get<std::string>());
    if (j.contains("on_top_probability")) d.on_top_probability = j.at("on_top_probability").get<double>();
    if (j.contains("inclined_steps")) d.inclined_steps = j.at("inclined_steps").get<bool>();
    if (j.contains("step_pitch_max")) d.step_pitch_max = j.at("step_pitch_max").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("terrain config: ") + e.what());
  }
  d.validate();
  c = d;
}

TerrainProfile::TerrainProfile(std::vector<Breakpoint> points, StairMetadata meta)
    : points_(std::move(points)), meta_(std::move(meta)) {
  if (points_.size() < 2) throw ConfigError("terrain profile needs at least two breakpoints");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!std::isfinite(points_[i].x) || !std::isfinite(points_[i].z))
      throw ConfigError("terrain profile has a non-finite breakpoint");
    if (i == 0) continue;
    if (points_[i].x < points_[i - 1].x) throw ConfigError("terrain breakpoints must be ordered in x");
    if (points_[i].x == points_[i - 1].x) {
      if (i >= 2 && points_[i - 2].x == points_[i].x)
        throw ConfigError("terrain profile has more than two breakpoints at one x");
      risers_.push_back(points_[i].x);
    }
  }
  if (points_[1].x == points_[0].x || points_.back().x == points_[points_.size() - 2].x)
    throw ConfigError("terrain profile must not begin or end with a riser");
}

double TerrainProfile::height_at(double x) const {
  const auto& p = points_;
  const std::size_t n = p.size();
  if (x <= p[0].x) {
    const double s = (p[1].z - p[0].z) / (p[1].x - p[0].x);
    return p[0].z + s * (x - p[0].x);
  }
  if (x >= p[n - 1].x) {
    const double s = (p[n - 1].z - p[n - 2].z) / (p[n - 1].x - p[n - 2].x);
    return p[n - 1].z + s * (x - p[n - 1].x);
  }
  auto it = std::upper_bound(p.begin(), p.end(), x, [](double v, const Breakpoint& b) { return v < b.x; });
  const std::size_t hi = static_cast<std::size_t>(it - p.begin());
  const Breakpoint& a = p[hi - 1];
  if (a.x == x && hi >= 2 && p[hi - 2].x == x) return std::max(a.z, p[hi - 2].z);
  const Breakpoint& b = p[hi];
  return a.z + (b.z - a.z) * (x - a.x) / (b.x - a.x);
}

std::vector<double> TerrainProfile::riser_positions() const { return risers_; }

double TerrainProfile::distance_to_next_elevation_change(double x, double horizon) const {
  double best = std::numeric_limits<double>::infinity();
  auto it = std::lower_bound(risers_.begin(), risers_.end(), x);
  if (it != risers_.end()) best = std::min(best, *it - x);
  if (it != risers_.begin()) best = std::min(best, x - *(it - 1));
  return best <= horizon ? best : std::numeric_limits<double>::infinity();
}

GroundContact TerrainProfile::contact(double px, double pz) const {
  GroundContact out;
  const double h = height_at(px);
  if (!(pz < h)) return out;
  out.inside = true;
  const double reach = h - pz;
  const auto& p = points_;
  const std::size_t n = p.size();
  auto lo_it = std::lower_bound(p.begin(), p.end(), px - reach, [](const Breakpoint& b, double v) { return b.x < v; });
  auto hi_it = std::upper_bound(p.begin(), p.end(), px + reach, [](double v, const Breakpoint& b) { return v < b.x; });
  std::size_t first = lo_it == p.begin() ? 0 : static_cast<std::size_t>(lo_it - p.begin()) - 1;
  std::size_t last = std::min(static_cast<std::size_t>(hi_it - p.begin()), n - 1);
  if (last <= first) last = std::min(first + 1, n - 1);
  if (last == first) first = last - 1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = first; i < last; ++i) {
    const auto sd = segment_distance(p[i], p[i + 1], px, pz, i == 0, i + 2 == n);
    if (sd.dist2 < best) {
      best = sd.dist2;
      out.nx = sd.nx;
      out.nz = sd.nz;
    }
  }
  out.depth = std::sqrt(best);
  return out;
}

bool TerrainProfile::operator==(const TerrainProfile& o) const {
  if (points_.size() != o.points_.size()) return false;
  for (std::size_t i = 0; i < points_.size(); ++i)
    if (points_[i].x != o.points_[i].x || points_[i].z != o.points_[i].z) return false;
  const auto& a = meta_;
  const auto& b = o.meta_;
  return a.seed == b.seed && a.step_count == b.step_count && a.descending == b.descending &&
         a.on_top == b.on_top && a.rises == b.rises && a.runs == b.runs &&
         a.tread_pitches == b.tread_pitches && a.stairs_start_x == b.stairs_start_x &&
         a.stairs_end_x == b.stairs_end_x && a.landing_length == b.landing_length &&
         a.incline_before == b.incline_before && a.incline_after == b.incline_after;
}

int proximity_bit(const TerrainProfile& profile, double x, double radius) {
  return profile.distance_to_next_elevation_change(x) <= radius ? 1 : 0;
}

namespace {

// Builds approach incline, risers/treads, landing, and departure incline with
// the first riser at `start_x` and ground height 0 at its foot.
TerrainProfile build_stairs(double start_x, const std::vector<double>& rises, const std::vector<double>& runs,
                            const std::vector<double>& pitches, double landing, double incline_before,
                            double incline_after, bool descending, StairMetadata meta) {
  std::vector<Breakpoint> pts;
  const double x_min = std::min(start_x, 0.0) - kLeadIn;
  pts.push_back({x_min, std::tan(incline_before) * (x_min - start_x)});
  double x = start_x;
  double z = 0.0;
  const std::size_t n = rises.size();
  for (std::size_t k = 0; k < n; ++k) {
    pts.push_back({x, z});
    z += rises[k];
    pts.push_back({x, z});
    if (k + 1 < n) {
      z += std::tan(pitches[k]) * runs[k];
      x += runs[k];
    }
  }
  meta.stairs_start_x = start_x;
  meta.stairs_end_x = x;
  x += landing;
  pts.push_back({x, z});
  const double x_max = std::max(x, 0.0) + kTrailOut;
  pts.push_back({x_max, z + std::tan(incline_after) * (x_max - x)});

  meta.step_count = static_cast<int>(n);
  meta.rises = rises;
  meta.runs = runs;
  meta.tread_pitches = pitches;
  meta.landing_length = landing;
  meta.incline_before = incline_before;
  meta.incline_after = incline_after;
  meta.descending = descending;
  if (descending) {
    for (auto& b : pts) b.z = -b.z;
    for (auto& r : meta.rises) r = -r;
    for (auto& t : meta.tread_pitches) t = -t;
    meta.incline_before = -incline_before;
    meta.incline_after = -incline_after;
  }
  return TerrainProfile(std::move(pts), std::move(meta));
}

}  // namespace

TerrainProfile generate(const StairGenConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const double incline_before = uniform(rng, config.incline);
  const double incline_after = uniform(rng, config.incline);
  const int steps = uniform_int(rng, config.step_count.lo, config.step_count.hi);

  StairMetadata meta;
  meta.seed = seed;
  if (steps == 0) {
    const double s = std::tan(incline_before);
    meta.incline_before = meta.incline_after = incline_before;
    return TerrainProfile({{-50.0, -50.0 * s}, {50.0, 50.0 * s}}, meta);
  }

  bool descending = false;
  switch (config.direction) {
    case StairDirection::ascend: break;
    case StairDirection::descend: descending = true; break;
    case StairDirection::both: descending = uniform01(rng) < 0.5; break;
  }

  std::vector<double> rises(static_cast<std::size_t>(steps));
  std::vector<double> runs(static_cast<std::size_t>(steps - 1));
  std::vector<double> pitches(static_cast<std::size_t>(steps - 1), 0.0);
  for (auto& r : rises) r = uniform(rng, config.rise) + uniform(rng, -config.per_step_noise, config.per_step_noise);
  for (std::size_t k = 0; k < runs.size(); ++k) {
    runs[k] = uniform(rng, config.run) + uniform(rng, -config.per_step_noise, config.per_step_noise);
    if (config.inclined_steps) pitches[k] = uniform(rng, -config.step_pitch_max, config.step_pitch_max);
  }
  const double landing = uniform(rng, config.landing_length);
  const bool on_top = uniform01(rng) < config.on_top_probability;
  const double approach = uniform(rng, config.approach_distance);

  double start_x = approach;
  if (on_top) {
    double flight = 0.0;
    for (double r : runs) flight += r;
    // Place the robot somewhere on the landing or the ground just past it.
    const double past_edge = uniform(rng, 0.3, 0.3 + landing);
    start_x = -past_edge - flight;
  }
  meta.on_top = on_top;
  return build_stairs(start_x, rises, runs, pitches, landing, incline_before, incline_after, descending, meta);
}

TerrainProfile make_staircase(double rise, double run, int steps, double approach, double landing,
                              bool descending) {
  if (steps < 1 || rise <= 0.0 || run <= 0.0 || landing <= 0.0)
    throw ConfigError("staircase needs steps >= 1 and positive rise, run, landing");
  std::vector<double> rises(static_cast<std::size_t>(steps), rise);
  std::vector<double> runs(static_cast<std::size_t>(steps - 1), run);
  std::vector<double> pitches(runs.size(), 0.0);
  return build_stairs(approach, rises, runs, pitches, landing, 0.0, 0.0, descending, StairMetadata{});
}

TerrainProfile make_ledge(double x_edge, double dz) {
  StairMetadata meta;
  meta.stairs_start_x = meta.stairs_end_x = x_edge;
  if (dz == 0.0) {
    return TerrainProfile({{x_edge - kLeadIn - 50.0, 0.0}, {x_edge, 0.0}, {x_edge + kTrailOut + 50.0, 0.0}}, meta);
  }
  meta.step_count = 1;
  meta.rises = {dz};
  meta.descending = dz < 0.0;
  meta.landing_length = kTrailOut;
  return TerrainProfile(
      {{x_edge - kLeadIn - 50.0, 0.0}, {x_edge, 0.0}, {x_edge, dz}, {x_edge + kTrailOut + 50.0, dz}}, meta);
}

TerrainProfile make_incline(double angle) {
  StairMetadata meta;
  meta.incline_before = meta.incline_after = angle;
  const double s = std::tan(angle);
  return TerrainProfile({{-50.0, -50.0 * s}, {50.0, 50.0 * s}}, meta);
}

std::string export_profile(const TerrainProfile& profile) {
  const auto& m = profile.metadata();
  nlohmann::json pts = nlohmann::json::array();
  // Adding +0.0 folds -0.0 into 0.0 so level ground prints the same on both sides.
  for (const auto& b : profile.breakpoints()) pts.push_back({b.x + 0.0, b.z + 0.0});
  nlohmann::json j{
      {"version", kFormatVersion},
      {"seed", m.seed},
      {"breakpoints", pts},
      {"metadata",
       {{"step_count", m.step_count},
        {"descending", m.descending},
        {"on_top", m.on_top},
        {"rises", m.rises},
        {"runs", m.runs},
        {"tread_pitches", m.tread_pitches},
        {"stairs_start_x", m.stairs_start_x},
        {"stairs_end_x", m.stairs_end_x},
        {"landing_length", m.landing_length},
        {"incline_before", m.incline_before},
        {"incline_after", m.incline_after}}},
  };
  return j.dump(2) + "\n";
}

TerrainProfile import_profile(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const int version = j.at("version").get<int>();
    if (version != kFormatVersion)
      throw ParseError("terrain file version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kFormatVersion) + ")");
    StairMetadata m;
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& md = j.at("metadata");
    m.step_count = md.at("step_count").get<int>();
    m.descending = md.at("descending").get<bool>();
    m.on_top = md.at("on_top").get<bool>();
    m.rises = md.at("rises").get<std::vector<double>>();
    m.runs = md.at("runs").get<std::vector<double>>();
    m.tread_pitches = md.at("tread_pitches").get<std::vector<double>>();
    m.stairs_start_x = md.at("stairs_start_x").get<double>();
    m.stairs_end_x = md.at("stairs_end_x").get<double>();
    m.landing_length = md.at("landing_length").get<double>();
    m.incline_before = md.at("incline_before").get<double>();
    m.incline_after = md.at("incline_after").get<double>();
    std::vector<Breakpoint> pts;
    for (const auto& e : j.at("breakpoints")) {
      if (!e.is_array() || e.size() != 2) throw ParseError("terrain file: breakpoint must be [x, h]");
      pts.push_back({e[0].get<double>(), e[1].get<double>()});
    }
    return TerrainProfile(std::move(pts), std::move(m));
  } catch (const ParseError&) {
    throw;
  } catch (const ConfigError& e) {
    throw ParseError(std::string("terrain file: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("terrain file: ") + e.what());
  }
}

}  // namespace stairwalk::terrain
