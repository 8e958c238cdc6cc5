#pragma once

// Planning heads on top of trained models: full-trajectory global planning
// with a global-layout CNP, reactive velocity control with a local-layout CNP,
// and the plain feed-forward regression baseline.

#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "socnav/cnp.hpp"
#include "socnav/dataset.hpp"
#include "socnav/mlp.hpp"
#include "socnav/sim.hpp"

namespace socnav {

struct GlobalPlan {
  std::vector<double> phases;
  std::vector<Vec2> points;
  std::vector<Vec2> stds;
  std::vector<double> gamma;
  std::vector<ContextPoint> context;
};

inline std::vector<double> phase_grid(std::size_t n_points) {
  require(n_points >= 2, ErrorCode::InvalidArgument, "a plan needs at least two points");
  std::vector<double> out(n_points);
  for (std::size_t k = 0; k < n_points; ++k) out[k] = static_cast<double>(k) / static_cast<double>(n_points - 1);
  return out;
}

/// Test-time conditioning set: the start at phase 0 and the goal at phase 1.
inline std::vector<ContextPoint> endpoint_context(const Scenario& scenario) {
  const auto gamma = global_gamma(scenario);
  return {{{0.0}, gamma, {scenario.start.x, scenario.start.y}}, {{1.0}, gamma, {scenario.goal.x, scenario.goal.y}}};
}

inline GlobalPlan plan_global(const CnpModel& model, const Scenario& scenario, std::size_t n_points,
                              const std::vector<ContextPoint>& context) {
  require_layout(model, Mode::Global);
  GlobalPlan plan;
  plan.gamma = global_gamma(scenario);
  plan.context = context;
  plan.phases = phase_grid(n_points);
  std::vector<Query> queries;
  queries.reserve(n_points);
  for (double t : plan.phases) queries.push_back({{t}, plan.gamma});
  for (const auto& p : predict_many(model, context, queries)) {
    plan.points.push_back({p.mean(0), p.mean(1)});
    plan.stds.push_back({p.std(0), p.std(1)});
  }
  return plan;
}

/// Queries the whole phase grid in one batch, conditioned on start and goal.
inline GlobalPlan plan_global(const CnpModel& model, const Scenario& scenario, std::size_t n_points) {
  return plan_global(model, scenario, n_points, endpoint_context(scenario));
}

// ---------------------------------------------------------------------------
// Local planner

inline constexpr std::size_t kLocalContextSize = 5;

/// k points drawn (demo uniformly, then point uniformly) from training data.
inline std::vector<ContextPoint> local_context(const Dataset& train, double dt, std::uint64_t seed,
                                              std::size_t k = kLocalContextSize) {
  require(train.size() >= 1, ErrorCode::InvalidArgument, "local context needs a non-empty dataset");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_demo(0, train.size() - 1);
  std::vector<ContextPoint> out;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& demo = train.demos[pick_demo(rng)];
    std::uniform_int_distribution<std::size_t> pick_state(0, demo.states.size() - 1);
    const auto& s = demo.states[pick_state(rng)];
    const auto obstacles = obstacles_at(demo.scenario, demo.sim_time(s.t), dt);
    out.push_back(local_point(s.position, demo.scenario.goal, obstacles, s.velocity));
  }
  return out;
}

/// Stateless velocity controller around a local-layout CNP; the fixed
/// context is encoded once at construction.
class LocalPlanner {
 public:
  LocalPlanner(const CnpModel& model, double v_max) : model_(model), v_max_(v_max) {
    require_layout(model, Mode::Local);
    latent_ = condition(model, model.fixed_context);
  }

  Vec2 command(Vec2 robot_pos, Vec2 goal, std::span<const Obstacle> obstacles) const {
    const ContextPoint p = local_point(robot_pos, goal, obstacles, {});
    const auto pred = predict_conditioned(model_, latent_, {{p.x, p.gamma}}).front();
    return clamp_norm({pred.mean(0), pred.mean(1)}, v_max_);
  }

 private:
  const CnpModel& model_;
  double v_max_;
  Eigen::VectorXd latent_;
};

/// One command from the local CNP: x = goal - p, gamma = nearest obstacle - p,
/// output = predicted mean velocity clamped to v_max.
inline Vec2 local_step(const CnpModel& model, Vec2 robot_pos, Vec2 goal, std::span<const Obstacle> obstacles,
                       const std::vector<ContextPoint>& context, double v_max) {
  require_layout(model, Mode::Local);
  const ContextPoint p = local_point(robot_pos, goal, obstacles, {});
  const auto pred = predict(model, context, p.x, p.gamma);
  return clamp_norm({pred.mean(0), pred.mean(1)}, v_max);
}

/// Closed-loop rollout with the local CNP as the controller; the command is
/// applied directly as the robot velocity.
inline Demonstration run_local(const CnpModel& model, const Scenario& scenario, const SfmParams& params) {
  const LocalPlanner planner(model, params.v_max);
  return run_closed_loop(scenario, params, [&](const RobotState& s, std::span<const Obstacle> obs) {
    return planner.command(s.position, scenario.goal, obs);
  });
}

// ---------------------------------------------------------------------------
// Feed-forward baseline

struct FfnnConfig {
  int steps = 50000;
  AdamConfig adam;
  std::uint64_t seed = 1;
  std::vector<int> hidden{128, 128, 128, 128};
  int batch_size = 32;

  void validate() const {
    require(steps >= 1 && batch_size >= 1, ErrorCode::InvalidArgument, "steps and batch_size must be >= 1");
    require(adam.learning_rate > 0, ErrorCode::InvalidArgument, "learning_rate must be > 0");
    require(hidden.size() == 4, ErrorCode::InvalidArgument, "the baseline has exactly 5 weight layers");
  }
};

/// (phase, gamma) -> position regression network.
struct FfnnModel {
  NormStats norm;
  MlpParams net;

  void check() const {
    net.check();
    require(net.layers() == 5, ErrorCode::DimensionMismatch, "baseline must have 5 weight layers");
    require(net.in_dim() == kGlobalLayout.input_dim() && net.out_dim() == kGlobalLayout.y_dim,
            ErrorCode::DimensionMismatch, "baseline dims do not match the global layout");
  }
};

struct FfnnTrainResult {
  FfnnModel model;
  std::vector<double> losses;
};

/// MSE regression with Adam; each step uses `batch_size` points drawn
/// uniformly over all training points.
inline FfnnTrainResult train_ffnn(const PointSet& data, const FfnnConfig& cfg) {
  cfg.validate();
  require(data.layout.mode == Mode::Global, ErrorCode::DimensionMismatch, "baseline needs a global-layout dataset");
  require(!data.demos.empty(), ErrorCode::InvalidArgument, "training set is empty");
  std::mt19937_64 rng(cfg.seed);
  FfnnTrainResult res;
  res.model.norm = data.norm;
  res.model.net = init_mlp(chain_dims(kGlobalLayout.input_dim(), cfg.hidden, kGlobalLayout.y_dim), rng);
  Adam opt(res.model.net, cfg.adam);
  std::uniform_int_distribution<std::size_t> pick_demo(0, data.demos.size() - 1);
  const int xd = kGlobalLayout.x_dim, gd = kGlobalLayout.gamma_dim, yd = kGlobalLayout.y_dim;
  RowMatrix in(cfg.batch_size, xd + gd), target(cfg.batch_size, yd);
  MlpTrace trace;
  for (int step = 0; step < cfg.steps; ++step) {
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& block = data.demos[pick_demo(rng)];
      std::uniform_int_distribution<Eigen::Index> pick_pt(0, block.size() - 1);
      const Eigen::Index i = pick_pt(rng);
      in.block(b, 0, 1, xd) = block.x.row(i);
      in.block(b, xd, 1, gd) = block.gamma.row(i);
      target.row(b) = block.y.row(i);
    }
    const RowMatrix out = mlp_forward(res.model.net, in, &trace);
    const RowMatrix diff = out - target;
    const double count = static_cast<double>(diff.size());
    res.losses.push_back(diff.squaredNorm() / count);
    MlpParams grad = zeros_like(res.model.net);
    mlp_backward(res.model.net, trace, diff * (2.0 / count), grad);
    opt.update(res.model.net, grad);
  }
  return res;
}

/// Same phase grid as the CNP planner; no context, zero std.
inline GlobalPlan plan_ffnn(const FfnnModel& model, const Scenario& scenario, std::size_t n_points) {
  GlobalPlan plan;
  plan.gamma = global_gamma(scenario);
  plan.phases = phase_grid(n_points);
  const Eigen::VectorXd gn =
      model.norm.gamma.apply(Eigen::Map<const Eigen::VectorXd>(plan.gamma.data(), kGlobalLayout.gamma_dim));
  RowMatrix in(static_cast<Eigen::Index>(n_points), kGlobalLayout.input_dim());
  for (std::size_t k = 0; k < n_points; ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    in(row, 0) = (plan.phases[k] - model.norm.x.mean(0)) / model.norm.x.std(0);
    in.block(row, 1, 1, kGlobalLayout.gamma_dim) = gn.transpose();
  }
  const RowMatrix out = mlp_forward(model.net, in);
  for (Eigen::Index k = 0; k < out.rows(); ++k) {
    const Eigen::VectorXd y = model.norm.y.invert(out.row(k).transpose());
    plan.points.push_back({y(0), y(1)});
    plan.stds.push_back({0.0, 0.0});
  }
  return plan;
}

inline Json ffnn_to_json(const FfnnModel& m) {
  return {{"version", kCheckpointVersion}, {"kind", "ffnn"}, {"layout", "global"},
          {"norm_stats", norm_to_json(m.norm)}, {"net", mlp_to_json(m.net)}};
}

inline FfnnModel ffnn_from_json(const Json& j) {
  require(j.is_object() && j.value("version", 0) == kCheckpointVersion && j.value("kind", std::string()) == "ffnn",
          ErrorCode::VersionMismatch, "not a version-1 baseline checkpoint");
  try {
    FfnnModel m{norm_from_json(j.at("norm_stats")), mlp_from_json(j.at("net"))};
    m.check();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecordError(1, e.what());
  }
}

inline void save_ffnn(const FfnnModel& m, const std::string& path) { write_json_file(ffnn_to_json(m), path); }
inline FfnnModel load_ffnn(const std::string& path) { return ffnn_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Export

/// CSV with header phase,x,y,std_x,std_y; one row per plan point.
inline void export_plan_csv(const GlobalPlan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out << "phase,x,y,std_x,std_y\n";
  char buf[160];
  for (std::size_t k = 0; k < plan.points.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", plan.phases[k], plan.points[k].x,
                  plan.points[k].y, plan.stds[k].x, plan.stds[k].y);
    out << buf;
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path);
}

}  // namespace socnav
