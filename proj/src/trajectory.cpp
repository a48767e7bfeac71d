#include <fstream>
#include <sstream>

#include "stairwalk/env.hpp"

namespace stairwalk::env {

namespace {

using ojson = nlohmann::ordered_json;

template <typename V>
ojson vec_json(const V& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <typename V>
void vec_from(const ojson& j, V& v) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != v.size())
    throw ParseError("trajectory log: vector has wrong length");
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
}

}  // namespace

void TrajectoryLog::write_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trajectory log '" + path + "'");
  ojson head;
  head["type"] = "header";
  head["total_mass"] = total_mass;
  head["gravity"] = gravity;
  head["max_speed"] = max_speed;
  head["max_power"] = max_power;
  head["initial_q"] = vec_json(initial_q);
  head["initial_time"] = initial_time;
  head["termination"] = termination;
  out << head.dump() << '\n';

  for (const auto& s : steps) {
    ojson j;
    j["type"] = "step";
    j["time"] = s.time;
    j["q"] = vec_json(s.q);
    j["qdot"] = vec_json(s.qd);
    j["action"] = vec_json(s.action);
    j["torque"] = vec_json(s.torque);
    ojson grf = ojson::array();
    for (const auto& g : s.grf) grf.push_back({g.tangential, g.normal, g.fx, g.fz});
    j["grf"] = grf;
    ojson feet = ojson::array();
    for (const auto& f : s.feet)
      feet.push_back({f.position.x(), f.position.y(), f.velocity.x(), f.velocity.y(), f.pitch});
    j["feet"] = feet;
    j["foot_ground"] = s.foot_ground;
    j["ground"] = s.ground;
    j["phase"] = s.phase;
    j["reward"] = s.reward;
    ojson terms;
    for (int i = 0; i < gait::kRewardTerms; ++i)
      terms[std::string(gait::kRewardTermNames[static_cast<std::size_t>(i)])] = s.terms[static_cast<std::size_t>(i)];
    j["terms"] = terms;
    ojson energy = ojson::array();
    for (const auto& e : s.energy) energy.push_back({e.t, vec_json(e.torque), vec_json(e.omega)});
    j["energy"] = energy;
    out << j.dump() << '\n';
  }
  if (!out) throw ConfigError("failed while writing trajectory log '" + path + "'");
}

TrajectoryLog TrajectoryLog::read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trajectory log '" + path + "'");
  TrajectoryLog log;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const ojson j = ojson::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        log.total_mass = j.at("total_mass").get<double>();
        log.gravity = j.at("gravity").get<double>();
        log.max_speed = j.at("max_speed").get<std::array<double, sim::kJoints>>();
        log.max_power = j.at("max_power").get<std::array<double, sim::kJoints>>();
        vec_from(j.at("initial_q"), log.initial_q);
        log.initial_time = j.at("initial_time").get<double>();
        log.termination = j.at("termination").get<std::string>();
        have_header = true;
        continue;
      }
      LogStep s;
      s.time = j.at("time").get<double>();
      vec_from(j.at("q"), s.q);
      vec_from(j.at("qdot"), s.qd);
      s.action.resize(static_cast<Eigen::Index>(j.at("action").size()));
      vec_from(j.at("action"), s.action);
      vec_from(j.at("torque"), s.torque);
      for (std::size_t f = 0; f < 2; ++f) {
        const auto& g = j.at("grf").at(f);
        s.grf[f] = {g.at(0).get<double>(), g.at(1).get<double>(), g.at(2).get<double>(), g.at(3).get<double>()};
        const auto& ft = j.at("feet").at(f);
        s.feet[f].position = {ft.at(0).get<double>(), ft.at(1).get<double>()};
        s.feet[f].velocity = {ft.at(2).get<double>(), ft.at(3).get<double>()};
        s.feet[f].pitch = ft.at(4).get<double>();
      }
      s.foot_ground = j.at("foot_ground").get<std::array<double, 2>>();
      s.ground = j.at("ground").get<double>();
      s.phase = j.at("phase").get<double>();
      s.reward = j.at("reward").get<double>();
      const auto& terms = j.at("terms");
      for (int i = 0; i < gait::kRewardTerms; ++i)
        s.terms[static_cast<std::size_t>(i)] =
            terms.at(std::string(gait::kRewardTermNames[static_cast<std::size_t>(i)])).get<double>();
      for (const auto& e : j.at("energy")) {
        sim::EnergySample es;
        es.t = e.at(0).get<double>();
        vec_from(e.at(1), es.torque);
        vec_from(e.at(2), es.omega);
        s.energy.push_back(es);
      }
      log.steps.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("trajectory log '" + path + "' line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw ParseError("trajectory log '" + path + "' has no header line");
  return log;
}

}  // namespace stairwalk::env
