#include <cmath>
#include <fstream>
#include <sstream>

#include "stairwalk/simworld.hpp"

namespace stairwalk::sim {

namespace {

void positive(double v, const std::string& what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("biped model: " + what + " must be > 0");
}

nlohmann::json link_json(const LinkParams& l) {
  return {{"mass", l.mass}, {"length", l.length}, {"inertia", l.inertia}, {"com", {l.com_x, l.com_z}}};
}

LinkParams link_from(const nlohmann::json& j) {
  LinkParams l;
  l.mass = j.at("mass").get<double>();
  l.length = j.at("length").get<double>();
  l.inertia = j.at("inertia").get<double>();
  const auto& c = j.at("com");
  l.com_x = c.at(0).get<double>();
  l.com_z = c.at(1).get<double>();
  return l;
}

nlohmann::json joint_json(const JointParams& p) {
  return {{"kp", p.kp},
          {"kd", p.kd},
          {"torque_limit", p.torque_limit},
          {"max_speed", p.max_speed},
          {"max_power", p.max_power},
          {"damping", p.damping},
          {"nominal", p.nominal},
          {"action_scale", p.action_scale}};
}

JointParams joint_from(const nlohmann::json& j) {
  JointParams p;
  p.kp = j.at("kp").get<double>();
  p.kd = j.at("kd").get<double>();
  p.torque_limit = j.at("torque_limit").get<double>();
  p.max_speed = j.at("max_speed").get<double>();
  p.max_power = j.at("max_power").get<double>();
  p.damping = j.at("damping").get<double>();
  p.nominal = j.at("nominal").get<double>();
  p.action_scale = j.at("action_scale").get<double>();
  return p;
}

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

Range range_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("dynamics randomization: ranges must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

double BipedModel::total_mass() const { return torso.mass + 2.0 * (thigh.mass + shank.mass + foot.mass); }

Vec6 BipedModel::nominal_pose() const {
  Vec6 v;
  for (int i = 0; i < kJoints; ++i) v[i] = joint(i).nominal;
  return v;
}

void BipedModel::validate() const {
  const std::pair<const LinkParams*, const char*> links[] = {
      {&torso, "torso"}, {&thigh, "thigh"}, {&shank, "shank"}, {&foot, "foot"}};
  for (const auto& [l, name] : links) {
    positive(l->mass, std::string(name) + ".mass");
    positive(l->inertia, std::string(name) + ".inertia");
  }
  positive(thigh.length, "thigh.length");
  positive(shank.length, "shank.length");
  positive(foot.length, "foot.length");
  if (!(toe_x > heel_x)) throw ConfigError("biped model: toe must be ahead of heel");
  const char* names[] = {"hip", "knee", "ankle"};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& jp = joints[i];
    const std::string n = names[i];
    positive(jp.torque_limit, n + ".torque_limit");
    positive(jp.max_speed, n + ".max_speed");
    positive(jp.max_power, n + ".max_power");
    positive(jp.kp, n + ".kp");
    if (jp.kd < 0.0 || jp.damping < 0.0) throw ConfigError("biped model: " + n + " gains must be >= 0");
    positive(jp.action_scale, n + ".action_scale");
  }
  positive(contact.normal_stiffness, "contact.normal_stiffness");
  if (contact.normal_damping < 0.0 || contact.tangential_damping < 0.0)
    throw ConfigError("biped model: contact damping must be >= 0");
  positive(contact.tangential_stiffness, "contact.tangential_stiffness");
  positive(contact.nominal_friction, "contact.nominal_friction");
  positive(gravity, "gravity");
}

BipedModel BipedModel::default_model() {
  BipedModel m;
  m.torso = {16.4, 0.5, 0.8, 0.0, 0.25};
  m.thigh = {4.0, 0.45, 0.07, 0.0, -0.2};
  m.shank = {2.8, 0.45, 0.05, 0.0, -0.2};
  m.foot = {1.0, 0.06, 0.01, 0.04, -0.04};
  m.heel_x = -0.06;
  m.heel_z = -0.06;
  m.toe_x = 0.16;
  m.toe_z = -0.06;
  //           kp     kd   tau_max  w_max  P_max  damping nominal scale
  m.joints[0] = {600.0, 30.0, 120.0, 15.0, 1200.0, 0.5, -0.35, 0.45};
  m.joints[1] = {600.0, 30.0, 150.0, 15.0, 1200.0, 0.5, 0.70, 0.45};
  m.joints[2] = {400.0, 15.0, 80.0, 15.0, 600.0, 0.2, -0.35, 0.35};
  return m;
}

BipedModel BipedModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("biped model: cannot open '" + path + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    BipedModel m = j.get<BipedModel>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("biped model '" + path + "': " + e.what());
  }
}

void to_json(nlohmann::json& j, const BipedModel& m) {
  j = nlohmann::json{
      {"links",
       {{"torso", link_json(m.torso)},
        {"thigh", link_json(m.thigh)},
        {"shank", link_json(m.shank)},
        {"foot", link_json(m.foot)}}},
      {"heel", {m.heel_x, m.heel_z}},
      {"toe", {m.toe_x, m.toe_z}},
      {"joints", {{"hip", joint_json(m.joints[0])}, {"knee", joint_json(m.joints[1])}, {"ankle", joint_json(m.joints[2])}}},
      {"contact",
       {{"normal_stiffness", m.contact.normal_stiffness},
        {"normal_damping", m.contact.normal_damping},
        {"tangential_stiffness", m.contact.tangential_stiffness},
        {"tangential_damping", m.contact.tangential_damping},
        {"nominal_friction", m.contact.nominal_friction}}},
      {"gravity", m.gravity},
  };
}

void from_json(const nlohmann::json& j, BipedModel& m) {
  BipedModel r;
  try {
    const auto& l = j.at("links");
    r.torso = link_from(l.at("torso"));
    r.thigh = link_from(l.at("thigh"));
    r.shank = link_from(l.at("shank"));
    r.foot = link_from(l.at("foot"));
    r.heel_x = j.at("heel").at(0).get<double>();
    r.heel_z = j.at("heel").at(1).get<double>();
    r.toe_x = j.at("toe").at(0).get<double>();
    r.toe_z = j.at("toe").at(1).get<double>();
    const auto& jt = j.at("joints");
    r.joints[0] = joint_from(jt.at("hip"));
    r.joints[1] = joint_from(jt.at("knee"));
    r.joints[2] = joint_from(jt.at("ankle"));
    const auto& c = j.at("contact");
    r.contact.normal_stiffness = c.at("normal_stiffness").get<double>();
    r.contact.normal_damping = c.at("normal_damping").get<double>();
    r.contact.tangential_stiffness = c.at("tangential_stiffness").get<double>();
    r.contact.tangential_damping = c.at("tangential_damping").get<double>();
    r.contact.nominal_friction = c.at("nominal_friction").get<double>();
    r.gravity = j.at("gravity").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("biped model: ") + e.what());
  }
  r.validate();
  m = r;
}

void DynRandConfig::validate() const {
  const std::pair<const Range*, const char*> rs[] = {{&damping_scale, "damping_scale"},
                                                     {&mass_scale, "mass_scale"},
                                                     {&friction, "friction"},
                                                     {&encoder_offset, "encoder_offset"},
                                                     {&rate_hz, "rate_hz"}};
  for (const auto& [r, name] : rs)
    if (!r->ordered()) throw ConfigError(std::string("dynamics randomization: ") + name + " must satisfy lo <= hi");
  if (damping_scale.lo < 0.0) throw ConfigError("dynamics randomization: damping_scale must be >= 0");
  if (mass_scale.lo <= 0.0) throw ConfigError("dynamics randomization: mass_scale must be > 0");
  if (friction.lo <= 0.0) throw ConfigError("dynamics randomization: friction must be > 0");
  if (rate_hz.lo <= 0.0 || nominal_rate_hz <= 0.0) throw ConfigError("dynamics randomization: rate_hz must be > 0");
  if (rate_hz.hi > kInnerRateHz) throw ConfigError("dynamics randomization: rate_hz cannot exceed the inner loop rate");
}

void to_json(nlohmann::json& j, const DynRandConfig& c) {
  j = nlohmann::json{{"enabled", c.enabled},
                     {"damping_scale", range_json(c.damping_scale)},
                     {"mass_scale", range_json(c.mass_scale)},
                     {"friction", range_json(c.friction)},
                     {"encoder_offset", range_json(c.encoder_offset)},
                     {"rate_hz", range_json(c.rate_hz)},
                     {"nominal_rate_hz", c.nominal_rate_hz}};
}

void from_json(const nlohmann::json& j, DynRandConfig& c) {
  DynRandConfig d;
  try {
    if (j.contains("enabled")) d.enabled = j.at("enabled").get<bool>();
    if (j.contains("damping_scale")) d.damping_scale = range_from(j.at("damping_scale"));
    if (j.contains("mass_scale")) d.mass_scale = range_from(j.at("mass_scale"));
    if (j.contains("friction")) d.friction = range_from(j.at("friction"));
    if (j.contains("encoder_offset")) d.encoder_offset = range_from(j.at("encoder_offset"));
    if (j.contains("rate_hz")) d.rate_hz = range_from(j.at("rate_hz"));
    if (j.contains("nominal_rate_hz")) d.nominal_rate_hz = j.at("nominal_rate_hz").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dynamics randomization: ") + e.what());
  }
  d.validate();
  c = d;
}

DynRandSample DynRandSample::identity(double friction, double rate_hz) {
  DynRandSample s;
  s.damping_scale.fill(1.0);
  s.mass_scale.fill(1.0);
  s.encoder_offset.fill(0.0);
  s.friction = friction;
  s.rate_hz = {rate_hz, rate_hz};
  return s;
}

double DynRandSample::draw_rate(Rng& rng) const {
  if (rate_hz.lo == rate_hz.hi) return rate_hz.lo;
  return uniform(rng, rate_hz);
}

DynRandSample sample_dynamics(const DynRandConfig& config, std::uint64_t seed, double nominal_friction) {
  config.validate();
  if (!config.enabled) return DynRandSample::identity(nominal_friction, config.nominal_rate_hz);
  Rng rng(seed);
  DynRandSample s;
  for (auto& d : s.damping_scale) d = uniform(rng, config.damping_scale);
  for (auto& m : s.mass_scale) m = uniform(rng, config.mass_scale);
  s.friction = uniform(rng, config.friction);
  for (auto& e : s.encoder_offset) e = uniform(rng, config.encoder_offset);
  s.rate_hz = config.rate_hz;
  return s;
}

}  // namespace stairwalk::sim
