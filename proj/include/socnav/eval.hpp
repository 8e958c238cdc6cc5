#pragma once

// Evaluation metrics, CNP-vs-baseline comparison and SVG scene export.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "socnav/planners.hpp"
#include "socnav/scenario_io.hpp"
#include "socnav/sim.hpp"

namespace socnav {

inline constexpr double kPlanReachTolerance = 0.3;
inline constexpr double kCompareMargin = 0.15;

inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Order-independent digest of a scenario set.
inline std::string scenario_set_digest(const std::vector<Scenario>& scenarios) {
  std::vector<std::string> dumps;
  dumps.reserve(scenarios.size());
  for (const auto& s : scenarios) dumps.push_back(scenario_to_json(s).dump());
  std::sort(dumps.begin(), dumps.end());
  std::string all;
  for (const auto& d : dumps) all += d + '\n';
  return fnv1a_hex(all);
}

struct Metrics {
  double goal_reach_rate = 0.0;
  double collision_free_rate = 0.0;
  double mean_min_clearance = 0.0;
  double mean_path_length_ratio = 0.0;
  double ade = 0.0;
  double fde = 0.0;
  std::size_t n_scenarios = 0;
  std::string scenario_digest;
};

namespace detail {

/// Sum after sorting, so aggregates do not depend on scenario order.
inline double sorted_mean(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline Vec2 interpolate_polyline(const std::vector<double>& phases, const std::vector<Vec2>& points, double t) {
  if (points.size() == 1 || t <= phases.front()) return points.front();
  if (t >= phases.back()) return points.back();
  const auto it = std::upper_bound(phases.begin(), phases.end(), t);
  const std::size_t j = static_cast<std::size_t>(it - phases.begin());
  const double w = (t - phases[j - 1]) / (phases[j] - phases[j - 1]);
  return points[j - 1] + (points[j] - points[j - 1]) * w;
}

inline std::vector<double> demo_phases(const Demonstration& d) {
  std::vector<double> t;
  t.reserve(d.states.size());
  for (const auto& s : d.states) t.push_back(s.t);
  return t;
}

/// ADE and FDE on a common evenly spaced phase grid.
inline std::pair<double, double> displacement_errors(const std::vector<double>& phases_a, const std::vector<Vec2>& a,
                                                     const std::vector<double>& phases_b, const std::vector<Vec2>& b,
                                                     std::size_t grid = kResampleLength) {
  double sum = 0.0;
  for (std::size_t k = 0; k < grid; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(grid - 1);
    sum += distance(interpolate_polyline(phases_a, a, t), interpolate_polyline(phases_b, b, t));
  }
  return {sum / static_cast<double>(grid), distance(a.back(), b.back())};
}

}  // namespace detail

/// Clearance of a plan polyline against the obstacles' initial positions.
inline double plan_clearance(const std::vector<Vec2>& plan, const Scenario& s, double robot_radius) {
  double best = INFINITY;
  for (const auto& o : s.obstacles)
    best = std::min(best, point_polyline_distance(o.position, plan) - robot_radius - o.radius);
  return best;
}

/// Global plans against their scenarios and the SFM oracle paths.
inline Metrics evaluate_global(const std::vector<GlobalPlan>& plans, const std::vector<Scenario>& scenarios,
                               const std::vector<Demonstration>& oracle, double robot_radius) {
  require(plans.size() == scenarios.size() && plans.size() == oracle.size(), ErrorCode::LengthMismatch,
          "plans, scenarios and oracle demos must align");
  require(!plans.empty(), ErrorCode::InvalidArgument, "need at least one scenario");
  std::vector<double> reach, free, clear, ratio, ade, fde;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& p = plans[i];
    const auto& s = scenarios[i];
    reach.push_back(distance(p.points.back(), s.goal) <= kPlanReachTolerance ? 1.0 : 0.0);
    const double c = plan_clearance(p.points, s, robot_radius);
    if (std::isfinite(c)) clear.push_back(c);
    free.push_back(c > 0.0 ? 1.0 : 0.0);
    ratio.push_back(polyline_length(p.points) / distance(s.start, s.goal));
    const auto [a, f] =
        detail::displacement_errors(p.phases, p.points, detail::demo_phases(oracle[i]), oracle[i].positions());
    ade.push_back(a);
    fde.push_back(f);
  }
  Metrics m;
  m.goal_reach_rate = detail::sorted_mean(reach);
  m.collision_free_rate = detail::sorted_mean(free);
  m.mean_min_clearance = detail::sorted_mean(clear);
  m.mean_path_length_ratio = detail::sorted_mean(ratio);
  m.ade = detail::sorted_mean(ade);
  m.fde = detail::sorted_mean(fde);
  m.n_scenarios = plans.size();
  m.scenario_digest = scenario_set_digest(scenarios);
  return m;
}

/// A demonstration viewed as a plan (phase grid from its states).
inline GlobalPlan demo_as_plan(const Demonstration& d) {
  GlobalPlan p;
  p.phases = detail::demo_phases(d);
  p.points = d.positions();
  p.stds.assign(p.points.size(), {});
  p.gamma = d.gamma;
  return p;
}

/// Closed-loop traces: collisions use the obstacles at each state's simulated
/// time; displacement errors are against an SFM rollout of the same scenario.
inline Metrics evaluate_local(const std::vector<Demonstration>& traces, const std::vector<Scenario>& scenarios,
                              const SfmParams& params) {
  require(traces.size() == scenarios.size(), ErrorCode::LengthMismatch, "traces and scenarios must align");
  require(!traces.empty(), ErrorCode::InvalidArgument, "need at least one scenario");
  std::vector<double> reach, free, clear, ratio, ade, fde;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    const auto& s = scenarios[i];
    reach.push_back(distance(t.states.back().position, s.goal) <= params.goal_tol ? 1.0 : 0.0);
    const double c = demo_min_clearance(t, params);
    if (std::isfinite(c)) clear.push_back(c);
    free.push_back(c >= 0.0 ? 1.0 : 0.0);
    ratio.push_back(polyline_length(t.positions()) / distance(s.start, s.goal));
    const Demonstration ref = rollout(s, params);
    const auto [a, f] = detail::displacement_errors(detail::demo_phases(t), t.positions(), detail::demo_phases(ref),
                                                    ref.positions());
    ade.push_back(a);
    fde.push_back(f);
  }
  Metrics m;
  m.goal_reach_rate = detail::sorted_mean(reach);
  m.collision_free_rate = detail::sorted_mean(free);
  m.mean_min_clearance = detail::sorted_mean(clear);
  m.mean_path_length_ratio = detail::sorted_mean(ratio);
  m.ade = detail::sorted_mean(ade);
  m.fde = detail::sorted_mean(fde);
  m.n_scenarios = traces.size();
  m.scenario_digest = scenario_set_digest(scenarios);
  return m;
}

/// Median cosine similarity between local planner commands and the recorded
/// SFM velocities over the states of `demos` (states slower than
/// `min_speed` are skipped, their direction is ill-defined).
inline double velocity_agreement(const LocalPlanner& planner, const std::vector<Demonstration>& demos, double dt,
                                 double min_speed = 0.05) {
  std::vector<double> cos;
  for (const auto& d : demos) {
    for (const auto& s : d.states) {
      if (s.velocity.norm() < min_speed) continue;
      const auto obstacles = obstacles_at(d.scenario, d.sim_time(s.t), dt);
      const Vec2 cmd = planner.command(s.position, d.scenario.goal, obstacles);
      const double n = cmd.norm() * s.velocity.norm();
      cos.push_back(n > 0.0 ? cmd.dot(s.velocity) / n : 0.0);
    }
  }
  require(!cos.empty(), ErrorCode::InvalidArgument, "no moving states to compare");
  const auto mid = cos.begin() + static_cast<std::ptrdiff_t>(cos.size() / 2);
  std::nth_element(cos.begin(), mid, cos.end());
  if (cos.size() % 2 == 1) return *mid;
  const double hi = *mid;
  return (*std::max_element(cos.begin(), mid) + hi) / 2.0;
}

// ---------------------------------------------------------------------------
// Comparison report

inline Json metrics_to_json(const Metrics& m) {
  return {{"goal_reach_rate", m.goal_reach_rate},
          {"collision_free_rate", m.collision_free_rate},
          {"mean_min_clearance", m.mean_min_clearance},
          {"mean_path_length_ratio", m.mean_path_length_ratio},
          {"ade", m.ade},
          {"fde", m.fde},
          {"n_scenarios", m.n_scenarios},
          {"scenario_digest", m.scenario_digest}};
}

inline Metrics metrics_from_json(const Json& j) {
  Metrics m;
  m.goal_reach_rate = j.at("goal_reach_rate").get<double>();
  m.collision_free_rate = j.at("collision_free_rate").get<double>();
  m.mean_min_clearance = j.at("mean_min_clearance").get<double>();
  m.mean_path_length_ratio = j.at("mean_path_length_ratio").get<double>();
  m.ade = j.at("ade").get<double>();
  m.fde = j.at("fde").get<double>();
  m.n_scenarios = j.at("n_scenarios").get<std::size_t>();
  m.scenario_digest = j.at("scenario_digest").get<std::string>();
  return m;
}

/// Closed-loop showcase: an obstacle moving vertically across the robot's path.
inline Scenario moving_obstacle_scenario() {
  Scenario s;
  s.start = {1.0, 5.0};
  s.goal = {9.0, 5.0};
  s.obstacles = {{{5.0, 2.0}, {0.0, 0.5}, 0.3}};
  return s;
}

/// Closed-loop showcase: several stationary obstacles near the straight path.
inline Scenario stationary_obstacles_scenario() {
  Scenario s;
  s.start = {1.0, 5.0};
  s.goal = {9.0, 5.0};
  s.obstacles = {{{3.2, 5.3}, {}, 0.3}, {{5.5, 4.6}, {}, 0.4}, {{7.3, 5.4}, {}, 0.3}};
  return s;
}

struct Comparison {
  Metrics cnp;
  Metrics baseline;
  Metrics deltas;  // cnp - baseline; n_scenarios and digest copied
  bool cnp_collision_free_higher = false;
  bool cnp_margin_met = false;  // collision-free gap >= kCompareMargin
};

inline Comparison compare(const Metrics& cnp, const Metrics& baseline) {
  require(cnp.n_scenarios == baseline.n_scenarios && cnp.scenario_digest == baseline.scenario_digest,
          ErrorCode::ScenarioSetMismatch, "metrics were computed on different scenario sets");
  Comparison c{cnp, baseline, {}, false, false};
  c.deltas.goal_reach_rate = cnp.goal_reach_rate - baseline.goal_reach_rate;
  c.deltas.collision_free_rate = cnp.collision_free_rate - baseline.collision_free_rate;
  c.deltas.mean_min_clearance = cnp.mean_min_clearance - baseline.mean_min_clearance;
  c.deltas.mean_path_length_ratio = cnp.mean_path_length_ratio - baseline.mean_path_length_ratio;
  c.deltas.ade = cnp.ade - baseline.ade;
  c.deltas.fde = cnp.fde - baseline.fde;
  c.deltas.n_scenarios = cnp.n_scenarios;
  c.deltas.scenario_digest = cnp.scenario_digest;
  c.cnp_collision_free_higher = c.deltas.collision_free_rate > 0.0;
  // Rates are multiples of 1/n; compare with a half-step tolerance.
  c.cnp_margin_met = c.deltas.collision_free_rate >= kCompareMargin - 0.5 / static_cast<double>(cnp.n_scenarios);
  return c;
}

inline Json comparison_to_json(const Comparison& c, const std::string& config_digest) {
  Json deltas = metrics_to_json(c.deltas);
  deltas.erase("n_scenarios");
  deltas.erase("scenario_digest");
  return {{"cnp", metrics_to_json(c.cnp)},
          {"baseline", metrics_to_json(c.baseline)},
          {"deltas", std::move(deltas)},
          {"flags",
           {{"cnp_collision_free_higher", c.cnp_collision_free_higher},
            {"cnp_collision_free_margin_met", c.cnp_margin_met},
            {"margin", kCompareMargin}}},
          {"config_digest", config_digest}};
}

// ---------------------------------------------------------------------------
// SVG

struct NamedPath {
  std::string name;
  std::vector<Vec2> points;
};

namespace detail {

struct PathStyle {
  const char* color;
  const char* dash;
};

inline constexpr PathStyle kPathStyles[] = {
    {"#1f77b4", ""}, {"#d62728", "6,3"}, {"#2ca02c", "2,2"}, {"#9467bd", "8,2,2,2"}, {"#ff7f0e", "4,4"},
};

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Renders bounds, obstacles (dashed track for dynamic ones over
/// `track_horizon` seconds), start/goal and one styled polyline per path.
inline std::string render_svg(const Scenario& s, const std::vector<NamedPath>& paths, double track_horizon = 10.0,
                              double dt = 0.05) {
  using detail::fmt;
  constexpr double scale = 50.0, margin = 20.0, legend_h = 20.0;
  const Bounds& b = s.bounds;
  const double w = (b.xmax - b.xmin) * scale + 2 * margin;
  const double h = (b.ymax - b.ymin) * scale + 2 * margin + legend_h * static_cast<double>(paths.size());
  auto px = [&](Vec2 p) { return fmt(margin + (p.x - b.xmin) * scale) + "," + fmt(margin + (b.ymax - p.y) * scale); };
  auto sx = [&](double x) { return fmt(margin + (x - b.xmin) * scale); };
  auto sy = [&](double y) { return fmt(margin + (b.ymax - y) * scale); };

  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(w) + "\" height=\"" + fmt(h) +
         "\" viewBox=\"0 0 " + fmt(w) + " " + fmt(h) + "\">\n";
  out += "<rect x=\"" + fmt(margin) + "\" y=\"" + fmt(margin) + "\" width=\"" + fmt((b.xmax - b.xmin) * scale) +
         "\" height=\"" + fmt((b.ymax - b.ymin) * scale) + "\" fill=\"white\" stroke=\"black\"/>\n";
  for (const auto& o : s.obstacles) {
    if (o.is_dynamic()) {
      std::string pts;
      for (double t = 0.0; t <= track_horizon + 1e-9; t += 0.5) pts += px(obstacle_at(o, b, t, dt).position) + " ";
      out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"gray\" stroke-dasharray=\"4,3\"/>\n";
    }
    out += "<circle cx=\"" + sx(o.position.x) + "\" cy=\"" + sy(o.position.y) + "\" r=\"" + fmt(o.radius * scale) +
           "\" fill=\"#bbbbbb\" stroke=\"black\"/>\n";
  }
  out += "<circle cx=\"" + sx(s.start.x) + "\" cy=\"" + sy(s.start.y) + "\" r=\"5\" fill=\"green\"/>\n";
  out += "<circle cx=\"" + sx(s.goal.x) + "\" cy=\"" + sy(s.goal.y) + "\" r=\"5\" fill=\"red\"/>\n";
  const double legend_y0 = (b.ymax - b.ymin) * scale + 2 * margin;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& style = detail::kPathStyles[i % std::size(detail::kPathStyles)];
    const std::string dash = *style.dash ? std::string(" stroke-dasharray=\"") + style.dash + "\"" : "";
    std::string pts;
    for (const auto& p : paths[i].points) pts += px(p) + " ";
    out += "<polyline class=\"path\" data-name=\"" + detail::xml_escape(paths[i].name) + "\" points=\"" + pts +
           "\" fill=\"none\" stroke=\"" + style.color + "\" stroke-width=\"2\"" + dash + "/>\n";
    const double ly = legend_y0 + legend_h * (static_cast<double>(i) + 0.5);
    out += "<line x1=\"" + fmt(margin) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(margin + 30) + "\" y2=\"" + fmt(ly) +
           "\" stroke=\"" + style.color + "\" stroke-width=\"2\"" + dash + "/>\n";
    out += "<text x=\"" + fmt(margin + 36) + "\" y=\"" + fmt(ly + 4) + "\" font-size=\"12\">" +
           detail::xml_escape(paths[i].name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

inline void export_svg(const Scenario& s, const std::vector<NamedPath>& paths, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out << render_svg(s, paths);
  if (!out) fail(ErrorCode::Io, "write failed for " + path);
}

}  // namespace socnav
