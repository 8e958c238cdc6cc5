#pragma once

// 2D kinematic world with a Social Force Model controller. The SFM is the
// demonstration oracle for the learned planners and also the reference
// controller in closed-loop evaluation.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "socnav/error.hpp"
#include "socnav/geometry.hpp"

namespace socnav {

struct Obstacle {
  Vec2 position;
  Vec2 velocity;
  double radius = 0.3;

  bool is_dynamic() const { return velocity.x != 0.0 || velocity.y != 0.0; }
  bool operator==(const Obstacle&) const = default;
};

struct Scenario {
  Vec2 start;
  Vec2 goal;
  std::vector<Obstacle> obstacles;
  Bounds bounds;

  bool operator==(const Scenario&) const = default;
};

struct RobotState {
  Vec2 position;
  Vec2 velocity;
};

struct SfmParams {
  double v_des = 1.0;        // m/s
  double tau_relax = 0.5;    // s
  double repulsion = 20.0;   // A, m/s^2
  double range = 0.25;       // B, m
  double robot_radius = 0.2; // m
  double v_max = 1.5;        // m/s
  double dt = 0.05;          // s
  double goal_tol = 0.1;     // m
  int max_steps = 600;
  // Desired speed ramps linearly to zero inside this radius around the goal.
  double arrival_radius = 1.5;  // m
  // Standard deviation of the per-step random acceleration (m/s^2) applied
  // during rollouts; it breaks exact left/right ties in front of obstacles.
  double fluctuation = 0.05;

  void validate() const {
    const bool positive = v_des > 0 && tau_relax > 0 && repulsion > 0 && range > 0 &&
                          robot_radius > 0 && v_max > 0 && dt > 0 && goal_tol > 0 &&
                          max_steps > 0 && arrival_radius > 0 && fluctuation >= 0;
    require(positive, ErrorCode::InvalidArgument, "SFM parameters must be strictly positive");
    require(dt <= 0.1, ErrorCode::InvalidArgument, "dt must be <= 0.1 s");
  }
};

/// Obstacle placement used by sample_scenario.
enum class Placement {
  Uniform,    // anywhere in bounds
  OnSegment,  // near the start-goal segment, within a lateral band
  Mixed,      // per scenario, OnSegment with probability mixed_on_segment
};

struct SamplingConfig {
  Bounds bounds{0.0, 0.0, 10.0, 10.0};
  double min_task_distance = 3.0;
  int obstacle_count_min = 1;
  int obstacle_count_max = 3;
  double obstacle_radius_min = 0.2;
  double obstacle_radius_max = 0.5;
  double p_dynamic = 0.3;
  double obstacle_speed_max = 0.5;
  double robot_radius = 0.2;
  Placement placement = Placement::Uniform;
  // OnSegment only: fraction of the segment and absolute lateral offset (m).
  double segment_min = 0.3;
  double segment_max = 0.7;
  double lateral_max = 0.5;
  double mixed_on_segment = 0.5;
  int max_attempts = 10000;

  void validate() const {
    require(bounds.valid(), ErrorCode::InvalidArgument, "bounds must have positive extent");
    require(min_task_distance > 0, ErrorCode::InvalidArgument, "min_task_distance must be > 0");
    require(obstacle_count_min >= 0 && obstacle_count_max >= obstacle_count_min,
            ErrorCode::InvalidArgument, "obstacle count range is invalid");
    require(obstacle_radius_min > 0 && obstacle_radius_max >= obstacle_radius_min,
            ErrorCode::InvalidArgument, "obstacle radius range is invalid");
    require(p_dynamic >= 0 && p_dynamic <= 1, ErrorCode::InvalidArgument, "p_dynamic must be in [0,1]");
    require(obstacle_speed_max >= 0, ErrorCode::InvalidArgument, "obstacle_speed_max must be >= 0");
    require(robot_radius > 0, ErrorCode::InvalidArgument, "robot_radius must be > 0");
    require(segment_min >= 0 && segment_max <= 1 && segment_min <= segment_max,
            ErrorCode::InvalidArgument, "segment range must lie in [0,1]");
    require(lateral_max >= 0, ErrorCode::InvalidArgument, "lateral_max must be >= 0");
    require(mixed_on_segment >= 0 && mixed_on_segment <= 1, ErrorCode::InvalidArgument,
            "mixed_on_segment must be in [0,1]");
    require(max_attempts > 0, ErrorCode::InvalidArgument, "max_attempts must be > 0");
  }
};

/// One recorded sample: normalized phase, position, velocity.
struct TimedState {
  double t = 0.0;
  Vec2 position;
  Vec2 velocity;

  bool operator==(const TimedState&) const = default;
};

/// A recorded trajectory plus the task it solved. `duration` is the simulated
/// time covered by the phase range [0, 1].
struct Demonstration {
  std::vector<double> gamma;
  std::vector<TimedState> states;
  bool reached_goal = false;
  bool collided = false;
  Scenario scenario;
  double duration = 0.0;

  bool clean() const { return reached_goal && !collided; }
  double sim_time(double phase) const { return phase * duration; }
  std::vector<Vec2> positions() const {
    std::vector<Vec2> out;
    out.reserve(states.size());
    for (const auto& s : states) out.push_back(s.position);
    return out;
  }
  bool operator==(const Demonstration&) const = default;
};

// ---------------------------------------------------------------------------
// Dynamics

/// Social-force acceleration: relaxation toward the desired goal velocity plus
/// exponential circular repulsion from every obstacle.
inline Vec2 sfm_accel(const RobotState& state, Vec2 goal, std::span<const Obstacle> obstacles,
                      const SfmParams& params) {
  const Vec2 to_goal = goal - state.position;
  const double goal_dist = to_goal.norm();
  Vec2 desired;
  if (goal_dist > params.goal_tol) {
    const double speed = params.v_des * std::min(1.0, goal_dist / params.arrival_radius);
    desired = to_goal * (speed / goal_dist);
  }
  Vec2 accel = (desired - state.velocity) / params.tau_relax;

  for (const auto& obs : obstacles) {
    const Vec2 away = state.position - obs.position;
    const double d = away.norm();
    if (d == 0.0) fail(ErrorCode::CoincidentObstacle, "robot and obstacle centers coincide");
    const double magnitude =
        params.repulsion * std::exp((params.robot_radius + obs.radius - d) / params.range);
    accel += away * (magnitude / d);
  }
  return accel;
}

/// Advances a single obstacle by `dt`, reflecting its center off the bounds.
inline Obstacle advance_obstacle(Obstacle obs, const Bounds& bounds, double dt) {
  if (!obs.is_dynamic()) return obs;
  obs.position += obs.velocity * dt;
  auto reflect = [](double& p, double& v, double lo, double hi) {
    if (p < lo) {
      p = 2.0 * lo - p;
      v = -v;
    } else if (p > hi) {
      p = 2.0 * hi - p;
      v = -v;
    }
  };
  reflect(obs.position.x, obs.velocity.x, bounds.xmin, bounds.xmax);
  reflect(obs.position.y, obs.velocity.y, bounds.ymin, bounds.ymax);
  return obs;
}

/// Obstacle state at simulated time `time`, reproducing the stepwise
/// integration of `step` (whole steps, then one fractional step).
inline Obstacle obstacle_at(const Obstacle& initial, const Bounds& bounds, double time, double dt) {
  if (!initial.is_dynamic() || time <= 0.0) return initial;
  const double ratio = time / dt;
  auto whole = static_cast<long>(std::floor(ratio + 1e-9));
  Obstacle obs = initial;
  for (long i = 0; i < whole; ++i) obs = advance_obstacle(obs, bounds, dt);
  const double rest = time - static_cast<double>(whole) * dt;
  if (rest > 1e-12) obs = advance_obstacle(obs, bounds, rest);
  return obs;
}

inline std::vector<Obstacle> obstacles_at(const Scenario& scenario, double time, double dt) {
  std::vector<Obstacle> out;
  out.reserve(scenario.obstacles.size());
  for (const auto& o : scenario.obstacles) out.push_back(obstacle_at(o, scenario.bounds, time, dt));
  return out;
}

/// Semi-implicit Euler: velocity first (clamped to v_max), then position.
inline std::pair<RobotState, std::vector<Obstacle>> step(const RobotState& state, Vec2 accel,
                                                         std::span<const Obstacle> obstacles,
                                                         const Bounds& bounds,
                                                         const SfmParams& params) {
  RobotState next;
  next.velocity = clamp_norm(state.velocity + accel * params.dt, params.v_max);
  next.position = state.position + next.velocity * params.dt;
  std::vector<Obstacle> moved;
  moved.reserve(obstacles.size());
  for (const auto& o : obstacles) moved.push_back(advance_obstacle(o, bounds, params.dt));
  return {next, std::move(moved)};
}

/// Signed clearance of one robot position against one obstacle set.
inline double clearance(Vec2 robot, std::span<const Obstacle> obstacles, double robot_radius) {
  double best = INFINITY;
  for (const auto& o : obstacles)
    best = std::min(best, distance(robot, o.position) - robot_radius - o.radius);
  return best;
}

/// min over time of (center distance - robot radius - obstacle radius).
/// `obstacle_tracks[k][i]` is the position of obstacle i at step k.
inline double min_clearance(std::span<const Vec2> positions,
                            const std::vector<std::vector<Vec2>>& obstacle_tracks,
                            std::span<const double> radii, double robot_radius) {
  require(positions.size() == obstacle_tracks.size(), ErrorCode::LengthMismatch,
          "positions and obstacle tracks differ in length");
  double best = INFINITY;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    require(obstacle_tracks[k].size() == radii.size(), ErrorCode::LengthMismatch,
            "obstacle track row does not match radii");
    for (std::size_t i = 0; i < radii.size(); ++i)
      best = std::min(best, distance(positions[k], obstacle_tracks[k][i]) - robot_radius - radii[i]);
  }
  return best;
}

/// Clearance of a recorded demonstration against its scenario's obstacles,
/// evaluated at each state's simulated time.
inline double demo_min_clearance(const Demonstration& demo, const SfmParams& params) {
  double best = INFINITY;
  for (const auto& s : demo.states) {
    const auto obs = obstacles_at(demo.scenario, demo.sim_time(s.t), params.dt);
    best = std::min(best, clearance(s.position, obs, params.robot_radius));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Scenarios

/// Throws InvalidArgument when a scenario breaks its construction invariants.
inline void validate_scenario(const Scenario& s, double robot_radius, double min_task_distance) {
  require(s.start.finite() && s.goal.finite(), ErrorCode::InvalidArgument, "non-finite start/goal");
  require(s.bounds.valid(), ErrorCode::InvalidArgument, "bounds must have positive extent");
  require(!(s.start == s.goal), ErrorCode::InvalidArgument, "start equals goal");
  require(s.bounds.contains(s.start) && s.bounds.contains(s.goal), ErrorCode::InvalidArgument,
          "start and goal must lie inside bounds");
  require(distance(s.start, s.goal) >= min_task_distance, ErrorCode::InvalidArgument,
          "start-goal distance below min_task_distance");
  for (const auto& o : s.obstacles) {
    require(o.radius > 0 && o.position.finite() && o.velocity.finite(), ErrorCode::InvalidArgument,
            "obstacle must have finite state and positive radius");
    require(distance(s.start, o.position) > robot_radius + o.radius, ErrorCode::InvalidArgument,
            "obstacle overlaps the start position");
  }
}

namespace detail {

inline Vec2 uniform_point(std::mt19937_64& rng, const Bounds& b) {
  std::uniform_real_distribution<double> ux(b.xmin, b.xmax), uy(b.ymin, b.ymax);
  const double x = ux(rng);
  return {x, uy(rng)};
}

}  // namespace detail

/// Rejection-samples a scenario satisfying every Scenario invariant.
inline Scenario sample_scenario(std::mt19937_64& rng, const SamplingConfig& cfg) {
  cfg.validate();
  std::uniform_int_distribution<int> count_dist(cfg.obstacle_count_min, cfg.obstacle_count_max);
  std::uniform_real_distribution<double> radius_dist(cfg.obstacle_radius_min, cfg.obstacle_radius_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    Scenario s;
    s.bounds = cfg.bounds;
    s.start = detail::uniform_point(rng, cfg.bounds);
    s.goal = detail::uniform_point(rng, cfg.bounds);
    if (distance(s.start, s.goal) < cfg.min_task_distance) continue;

    const bool on_segment = cfg.placement == Placement::OnSegment ||
                            (cfg.placement == Placement::Mixed && unit(rng) < cfg.mixed_on_segment);
    const int count = count_dist(rng);
    bool ok = true;
    for (int i = 0; i < count && ok; ++i) {
      Obstacle o;
      o.radius = radius_dist(rng);
      if (on_segment) {
        const Vec2 dir = (s.goal - s.start) / distance(s.start, s.goal);
        const Vec2 normal{-dir.y, dir.x};
        const double along = cfg.segment_min + (cfg.segment_max - cfg.segment_min) * unit(rng);
        const double lateral = cfg.lateral_max * (2.0 * unit(rng) - 1.0);
        o.position = s.start + (s.goal - s.start) * along + normal * lateral;
      } else {
        o.position = detail::uniform_point(rng, cfg.bounds);
      }
      if (unit(rng) < cfg.p_dynamic) {
        const double speed = cfg.obstacle_speed_max * unit(rng);
        const double heading = angle(rng);
        o.velocity = {speed * std::cos(heading), speed * std::sin(heading)};
      }
      ok = cfg.bounds.contains(o.position) &&
           distance(s.start, o.position) > cfg.robot_radius + o.radius &&
           distance(s.goal, o.position) > cfg.robot_radius + o.radius;
      s.obstacles.push_back(o);
    }
    if (ok) return s;
  }
  fail(ErrorCode::SamplingExhausted,
       "no valid scenario after " + std::to_string(cfg.max_attempts) + " attempts");
}

// ---------------------------------------------------------------------------
// Rollout

/// Global task vector: start, goal and the obstacle nearest the start-goal
/// segment at t = 0. Scenarios without obstacles use an off-map sentinel.
inline constexpr Vec2 kNoObstacleSentinel{-100.0, -100.0};

inline std::size_t obstacle_nearest_segment(const Scenario& s) {
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t i = 0; i < s.obstacles.size(); ++i) {
    const double d = point_segment_distance(s.obstacles[i].position, s.start, s.goal);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

inline std::vector<double> global_gamma(const Scenario& s) {
  Vec2 obs = kNoObstacleSentinel;
  if (!s.obstacles.empty()) obs = s.obstacles[obstacle_nearest_segment(s)].position;
  return {s.start.x, s.start.y, s.goal.x, s.goal.y, obs.x, obs.y};
}

/// Seed for the per-rollout fluctuation stream, derived from the scenario
/// bits so a rollout is a pure function of (scenario, params).
inline std::uint64_t scenario_seed(const Scenario& s) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h ^= bits;
    h *= 1099511628211ULL;
    h ^= h >> 29;
  };
  mix(s.start.x); mix(s.start.y); mix(s.goal.x); mix(s.goal.y);
  for (const auto& o : s.obstacles) {
    mix(o.position.x); mix(o.position.y); mix(o.velocity.x); mix(o.velocity.y); mix(o.radius);
  }
  return h;
}

/// Controller interface used by the closed-loop runner: returns the next
/// velocity given the current robot state, goal and current obstacles.
template <typename Controller>
Demonstration run_closed_loop(const Scenario& scenario, const SfmParams& params, Controller&& next_velocity) {
  params.validate();
  Demonstration demo;
  demo.scenario = scenario;
  demo.gamma = global_gamma(scenario);

  RobotState state{scenario.start, {0.0, 0.0}};
  std::vector<Obstacle> obstacles = scenario.obstacles;
  std::vector<double> times{0.0};
  demo.states.push_back({0.0, state.position, state.velocity});
  if (clearance(state.position, obstacles, params.robot_radius) < 0.0) demo.collided = true;

  int steps = 0;
  while (distance(state.position, scenario.goal) > params.goal_tol && steps < params.max_steps) {
    RobotState next;
    next.velocity = clamp_norm(next_velocity(state, std::span<const Obstacle>(obstacles)), params.v_max);
    next.position = state.position + next.velocity * params.dt;
    for (auto& o : obstacles) o = advance_obstacle(o, scenario.bounds, params.dt);
    state = next;
    ++steps;
    demo.states.push_back({0.0, state.position, state.velocity});
    times.push_back(steps * params.dt);
    if (clearance(state.position, obstacles, params.robot_radius) < 0.0) demo.collided = true;
  }
  demo.reached_goal = distance(state.position, scenario.goal) <= params.goal_tol;
  demo.duration = steps * params.dt;
  for (std::size_t k = 0; k < demo.states.size(); ++k)
    demo.states[k].t = steps > 0 ? times[k] / demo.duration : 0.0;
  if (steps > 0) demo.states.back().t = 1.0;
  return demo;
}

/// Integrates the SFM controller from the scenario start until the goal is
/// within goal_tol or max_steps elapse.
inline Demonstration rollout(const Scenario& scenario, const SfmParams& params) {
  std::mt19937_64 rng(scenario_seed(scenario));
  std::normal_distribution<double> noise(0.0, params.fluctuation > 0.0 ? params.fluctuation : 1.0);
  return run_closed_loop(scenario, params, [&](const RobotState& s, std::span<const Obstacle> obs) {
    Vec2 a = sfm_accel(s, scenario.goal, obs, params);
    if (params.fluctuation > 0.0) {
      const double nx = noise(rng);
      a += Vec2{nx, noise(rng)};
    }
    return s.velocity + a * params.dt;
  });
}

}  // namespace socnav
