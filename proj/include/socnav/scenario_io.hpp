#pragma once

// JSON encoding of scenarios:
//   {"start":[x,y],"goal":[x,y],
//    "obstacles":[{"pos":[x,y],"vel":[x,y],"radius":r}],
//    "bounds":[xmin,ymin,xmax,ymax]}

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "socnav/error.hpp"
#include "socnav/sim.hpp"

namespace socnav {

using Json = nlohmann::json;

inline Json vec_to_json(Vec2 v) { return Json::array({v.x, v.y}); }

inline Vec2 vec_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw std::invalid_argument("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Json scenario_to_json(const Scenario& s) {
  Json obstacles = Json::array();
  for (const auto& o : s.obstacles)
    obstacles.push_back({{"pos", vec_to_json(o.position)}, {"vel", vec_to_json(o.velocity)}, {"radius", o.radius}});
  return {{"start", vec_to_json(s.start)},
          {"goal", vec_to_json(s.goal)},
          {"obstacles", std::move(obstacles)},
          {"bounds", Json::array({s.bounds.xmin, s.bounds.ymin, s.bounds.xmax, s.bounds.ymax})}};
}

/// Throws std::invalid_argument or nlohmann::json::exception on bad input;
/// callers translate those into MalformedRecord with their own context.
inline Scenario scenario_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("scenario must be an object");
  Scenario s;
  s.start = vec_from_json(j.at("start"));
  s.goal = vec_from_json(j.at("goal"));
  for (const auto& o : j.at("obstacles")) {
    Obstacle obs;
    obs.position = vec_from_json(o.at("pos"));
    obs.velocity = o.contains("vel") ? vec_from_json(o.at("vel")) : Vec2{};
    obs.radius = o.at("radius").get<double>();
    s.obstacles.push_back(obs);
  }
  const auto& b = j.at("bounds");
  if (!b.is_array() || b.size() != 4) throw std::invalid_argument("bounds must be [xmin,ymin,xmax,ymax]");
  s.bounds = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open scenario file " + path);
  try {
    return scenario_from_json(Json::parse(in));
  } catch (const std::exception& e) {
    throw MalformedRecordError(1, path + ": " + e.what());
  }
}

inline void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write scenario file " + path);
  out << scenario_to_json(s).dump(2) << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for " + path);
}

}  // namespace socnav
