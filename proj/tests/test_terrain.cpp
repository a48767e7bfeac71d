#include <cmath>
#include <limits>

#include "doctest.h"
#include "stairwalk/terrain.hpp"
#include "support.hpp"

using namespace stairwalk;
using namespace stairwalk::terrain;

namespace {

TerrainProfile single_step(double x, double dz) { return make_ledge(x, dz); }

StairGenConfig level_flat() {
  StairGenConfig c = StairGenConfig::flat();
  c.incline = {0.0, 0.0};
  return c;
}

}  // namespace

TEST_SUITE("terrain") {

TEST_CASE("seeded profile stays inside the configured ranges") {
  const StairGenConfig c;
  const TerrainProfile p = generate(c, 42);
  const auto& m = p.metadata();
  CHECK(m.step_count >= 1);
  CHECK(m.step_count <= 8);
  for (double r : m.rises) {
    CHECK(std::abs(r) >= 0.09);
    CHECK(std::abs(r) <= 0.22);
  }
  for (double r : m.runs) {
    CHECK(r >= 0.23);
    CHECK(r <= 0.31);
  }
}

TEST_CASE("geometry measured from breakpoints agrees with the metadata") {
  const StairGenConfig c;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const TerrainProfile p = generate(c, seed);
    const auto& pts = p.breakpoints();
    std::vector<double> rises, xs;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      CHECK(pts[i].x >= pts[i - 1].x);
      if (pts[i].x == pts[i - 1].x) {
        rises.push_back(pts[i].z - pts[i - 1].z);
        xs.push_back(pts[i].x);
      } else {
        const double slope = (pts[i].z - pts[i - 1].z) / (pts[i].x - pts[i - 1].x);
        CHECK(std::abs(slope) <= std::tan(0.03) + 1e-12);
      }
    }
    REQUIRE(rises.size() == p.metadata().rises.size());
    for (std::size_t k = 0; k < rises.size(); ++k) CHECK(rises[k] == doctest::Approx(p.metadata().rises[k]).epsilon(1e-12));
    for (std::size_t k = 1; k < xs.size(); ++k)
      CHECK(xs[k] - xs[k - 1] == doctest::Approx(p.metadata().runs[k - 1]).epsilon(1e-12));
  }
}

TEST_CASE("generation is a pure function of config and seed") {
  const StairGenConfig c;
  CHECK(generate(c, 7) == generate(c, 7));
  CHECK(export_profile(generate(c, 7)) == export_profile(generate(c, 7)));
  CHECK_FALSE(generate(c, 7) == generate(c, 8));
}

TEST_CASE("forced flat config gives a single linear segment") {
  StairGenConfig c = StairGenConfig::flat();
  const TerrainProfile p = generate(c, 3);
  REQUIRE(p.breakpoints().size() == 2);
  CHECK(p.riser_positions().empty());
  const double a = p.metadata().incline_before;
  for (double x = -20.0; x <= 20.0; x += 0.37) CHECK(p.height_at(x) == doctest::Approx(std::tan(a) * x).epsilon(1e-12));
}

TEST_CASE("direction setting controls the sign of the rises") {
  StairGenConfig up;
  up.direction = StairDirection::ascend;
  StairGenConfig down;
  down.direction = StairDirection::descend;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const TerrainProfile a = generate(up, s), b = generate(down, s);
    for (double r : a.metadata().rises) CHECK(r > 0.0);
    for (double r : b.metadata().rises) CHECK(r < 0.0);
  }
}

TEST_CASE("both directions and on-top starts occur") {
  const StairGenConfig c;
  int down = 0, on_top = 0;
  const int n = 2000;
  for (int s = 0; s < n; ++s) {
    const auto m = generate(c, static_cast<std::uint64_t>(s)).metadata();
    down += m.descending ? 1 : 0;
    on_top += m.on_top ? 1 : 0;
  }
  CHECK(down == doctest::Approx(n / 2).epsilon(0.1));
  CHECK(on_top == doctest::Approx(0.2 * n).epsilon(0.15));
}

TEST_CASE("approach distance: first riser ahead of the start unless starting on top") {
  const StairGenConfig c;
  for (std::uint64_t s = 0; s < 300; ++s) {
    const auto m = generate(c, s).metadata();
    if (m.on_top) {
      CHECK(m.stairs_end_x < 0.0);
    } else {
      CHECK(m.stairs_start_x >= 0.0);
      CHECK(m.stairs_start_x <= 10.0);
    }
  }
}

TEST_CASE("invalid ranges are configuration errors") {
  StairGenConfig c;
  c.rise = {0.3, 0.1};
  CHECK_THROWS_AS((void)generate(c, 1), ConfigError);
  c = StairGenConfig{};
  c.per_step_noise = -0.01;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = StairGenConfig{};
  c.step_count = {5, 2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  nlohmann::json j = StairGenConfig{};
  j["run_range"] = {0.3};
  CHECK_THROWS_AS((void)j.get<StairGenConfig>(), ConfigError);
}

TEST_CASE("height_at follows the closed-above convention at a riser") {
  const TerrainProfile p = single_step(1.0, 0.15);
  CHECK(p.height_at(0.999) == 0.0);
  CHECK(p.height_at(1.0) == doctest::Approx(0.15));
  CHECK(p.height_at(1.5) == doctest::Approx(0.15));
  const TerrainProfile d = single_step(1.0, -0.15);
  CHECK(d.height_at(1.0) == 0.0);
  CHECK(d.height_at(1.001) == doctest::Approx(-0.15));
}

TEST_CASE("flat and inclined profiles evaluate analytically") {
  const TerrainProfile flat = make_incline(0.0);
  for (double x : {-1e3, -3.0, 0.0, 2.5, 1e3}) CHECK(flat.height_at(x) == 0.0);
  const TerrainProfile inc = make_incline(0.03);
  CHECK(inc.height_at(2.0) == doctest::Approx(2.0 * std::tan(0.03)).epsilon(1e-14));
  CHECK(std::isfinite(inc.height_at(1e6)));
}

TEST_CASE("distance to the next elevation change and the proximity bit") {
  CHECK(std::isinf(make_incline(0.0).distance_to_next_elevation_change(0.0)));
  const TerrainProfile p = single_step(3.0, 0.15);
  CHECK(p.distance_to_next_elevation_change(2.2) == doctest::Approx(0.8));
  CHECK(proximity_bit(p, 2.2) == 1);
  CHECK(p.distance_to_next_elevation_change(1.5) == doctest::Approx(1.5));
  CHECK(proximity_bit(p, 1.5) == 0);
  CHECK(p.distance_to_next_elevation_change(3.4) == doctest::Approx(0.4));
  CHECK(std::isinf(p.distance_to_next_elevation_change(1.5, 1.0)));
}

TEST_CASE("contact depth against treads and riser faces") {
  const TerrainProfile p = single_step(1.0, 0.15);
  auto c = p.contact(0.5, -0.01);
  CHECK(c.inside);
  CHECK(c.depth == doctest::Approx(0.01));
  CHECK(c.nz == doctest::Approx(1.0));
  // Just inside the riser face, closer to the face than to the upper tread.
  c = p.contact(1.005, 0.05);
  CHECK(c.inside);
  CHECK(c.depth == doctest::Approx(0.005));
  CHECK(c.nx == doctest::Approx(-1.0));
  CHECK_FALSE(p.contact(0.5, 0.01).inside);
}

TEST_CASE("staircase builder produces the requested geometry") {
  const TerrainProfile p = make_staircase(0.17, 0.30, 5, 1.0, 2.0, false);
  const auto r = p.riser_positions();
  REQUIRE(r.size() == 5);
  CHECK(r.front() == doctest::Approx(1.0));
  CHECK(r.back() == doctest::Approx(1.0 + 4 * 0.30));
  CHECK(p.height_at(r.back() + 1.0) == doctest::Approx(5 * 0.17));
  const TerrainProfile d = make_staircase(0.17, 0.30, 5, 1.0, 2.0, true);
  CHECK(d.height_at(r.back() + 1.0) == doctest::Approx(-5 * 0.17));
  CHECK_THROWS_AS((void)make_staircase(0.17, 0.3, 0, 1.0, 2.0, false), ConfigError);
}

TEST_CASE("export then import is the identity") {
  StairGenConfig c;
  c.inclined_steps = true;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const TerrainProfile p = generate(c, s * 7919 + 1);
    const TerrainProfile q = import_profile(export_profile(p));
    CHECK(p == q);
  }
}

TEST_CASE("malformed terrain files are parse errors") {
  const std::string text = export_profile(generate(StairGenConfig{}, 5));
  CHECK_THROWS_AS((void)import_profile(text.substr(0, text.size() / 2)), ParseError);
  CHECK_THROWS_AS((void)import_profile(""), ParseError);
  auto j = nlohmann::json::parse(text);
  j["version"] = kFormatVersion + 1;
  CHECK_THROWS_AS((void)import_profile(j.dump()), ParseError);
  j = nlohmann::json::parse(text);
  j["breakpoints"][1] = {1.0};
  CHECK_THROWS_AS((void)import_profile(j.dump()), ParseError);
  j = nlohmann::json::parse(text);
  std::swap(j["breakpoints"][0], j["breakpoints"][1]);
  CHECK_THROWS_AS((void)import_profile(j.dump()), ParseError);
}

TEST_CASE("exported level profile matches the frozen file") {
  const std::string golden = testing::read_file(testing::data_path("flat_profile.json"));
  REQUIRE_FALSE(golden.empty());
  CHECK(export_profile(generate(level_flat(), 0)) == golden);
}

}  // TEST_SUITE
