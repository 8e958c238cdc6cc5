#pragma once

// Demonstration data in the (X, gamma(X), SM(X)) form consumed by the CNP:
// generation, resampling, point extraction, normalization, context sampling
// and JSONL persistence.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "socnav/error.hpp"
#include "socnav/scenario_io.hpp"
#include "socnav/sim.hpp"

namespace socnav {

inline constexpr std::size_t kResampleLength = 200;

enum class Mode { Global, Local };

inline const char* to_string(Mode m) { return m == Mode::Global ? "global" : "local"; }

inline Mode mode_from_string(const std::string& s) {
  if (s == "global") return Mode::Global;
  if (s == "local") return Mode::Local;
  fail(ErrorCode::InvalidArgument, "unknown mode '" + s + "'");
}

/// Channel widths of one point. Global: X = phase, gamma = (start, goal,
/// obstacle), SM = position. Local: X = goal - p, gamma = obstacle - p,
/// SM = velocity.
struct Layout {
  Mode mode = Mode::Global;
  int x_dim = 1;
  int gamma_dim = 6;
  int y_dim = 2;

  int input_dim() const { return x_dim + gamma_dim; }
  int point_dim() const { return x_dim + gamma_dim + y_dim; }
  bool operator==(const Layout&) const = default;
};

inline constexpr Layout kGlobalLayout{Mode::Global, 1, 6, 2};
inline constexpr Layout kLocalLayout{Mode::Local, 2, 2, 2};

inline Layout layout_for(Mode m) { return m == Mode::Global ? kGlobalLayout : kLocalLayout; }

struct ContextPoint {
  std::vector<double> x;
  std::vector<double> gamma;
  std::vector<double> y;

  bool operator==(const ContextPoint&) const = default;
};

inline void check_point(const ContextPoint& p, const Layout& layout) {
  require(static_cast<int>(p.x.size()) == layout.x_dim &&
              static_cast<int>(p.gamma.size()) == layout.gamma_dim &&
              static_cast<int>(p.y.size()) == layout.y_dim,
          ErrorCode::DimensionMismatch,
          std::string("point does not match the ") + to_string(layout.mode) + " layout");
}

// ---------------------------------------------------------------------------
// Demonstrations

/// Linearly interpolates a demonstration onto `length` evenly spaced phases.
inline Demonstration resample(const Demonstration& raw, std::size_t length = kResampleLength) {
  require(!raw.states.empty(), ErrorCode::InvalidArgument, "cannot resample an empty demonstration");
  require(length >= 2, ErrorCode::InvalidArgument, "resample length must be >= 2");
  Demonstration out = raw;
  out.states.clear();
  out.states.reserve(length);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < length; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(length - 1);
    TimedState s;
    s.t = t;
    if (raw.states.size() == 1) {
      s.position = raw.states.front().position;
      s.velocity = raw.states.front().velocity;
    } else if (k + 1 == length) {
      s.position = raw.states.back().position;
      s.velocity = raw.states.back().velocity;
    } else {
      while (seg + 2 < raw.states.size() && raw.states[seg + 1].t <= t) ++seg;
      const auto& a = raw.states[seg];
      const auto& b = raw.states[seg + 1];
      const double w = (t - a.t) / (b.t - a.t);
      s.position = a.position + (b.position - a.position) * w;
      s.velocity = a.velocity + (b.velocity - a.velocity) * w;
    }
    out.states.push_back(s);
  }
  return out;
}

struct Dataset {
  std::vector<Demonstration> demos;
  // Layout the data was generated for ("global", "local"), or empty when the
  // data suits either.
  std::string layout;

  std::size_t size() const { return demos.size(); }
  bool operator==(const Dataset&) const = default;
};

/// Counters reported by generate_dataset.
struct GenerationSummary {
  std::size_t attempts = 0;
  std::size_t reached = 0;
  std::map<std::size_t, std::size_t> obstacle_histogram;  // over retained demos

  double reach_rate() const { return attempts ? static_cast<double>(reached) / attempts : 0.0; }
};

/// Produces `n` clean (goal reached, collision-free) resampled demonstrations.
/// Demo i draws from its own stream seeded with seed + i; rejected rollouts are
/// replaced from the same stream.
inline Dataset generate_dataset(std::size_t n, const SamplingConfig& sampling, const SfmParams& params,
                                std::uint64_t seed, GenerationSummary* summary = nullptr) {
  require(n >= 1, ErrorCode::InvalidArgument, "dataset size must be >= 1");
  sampling.validate();
  params.validate();
  Dataset ds;
  ds.demos.reserve(n);
  GenerationSummary local;
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(seed + i);
    for (int attempt = 0;; ++attempt) {
      require(attempt < sampling.max_attempts, ErrorCode::SamplingExhausted,
              "could not produce a clean demonstration for index " + std::to_string(i));
      const Scenario scenario = sample_scenario(rng, sampling);
      Demonstration demo = rollout(scenario, params);
      ++local.attempts;
      if (demo.reached_goal) ++local.reached;
      if (!demo.clean()) continue;
      ++local.obstacle_histogram[scenario.obstacles.size()];
      ds.demos.push_back(resample(demo));
      break;
    }
  }
  if (summary) *summary = local;
  return ds;
}

/// Global points: X = phase, gamma = global task vector, SM = position.
inline std::vector<ContextPoint> to_global_points(const Demonstration& demo) {
  const std::vector<double> gamma = global_gamma(demo.scenario);
  std::vector<ContextPoint> out;
  out.reserve(demo.states.size());
  for (const auto& s : demo.states) out.push_back({{s.t}, gamma, {s.position.x, s.position.y}});
  return out;
}

/// Relative position of the obstacle nearest to `p`. With no obstacles the
/// robot sees a far obstacle straight behind it (5 m opposite the goal).
inline Vec2 nearest_obstacle_offset(Vec2 p, Vec2 goal, std::span<const Obstacle> obstacles) {
  if (obstacles.empty()) {
    const Vec2 to_goal = goal - p;
    const double n = to_goal.norm();
    return n > 0.0 ? to_goal * (-5.0 / n) : Vec2{-5.0, 0.0};
  }
  Vec2 best = obstacles.front().position - p;
  for (const auto& o : obstacles) {
    const Vec2 rel = o.position - p;
    if (rel.norm() < best.norm()) best = rel;
  }
  return best;
}

inline ContextPoint local_point(Vec2 p, Vec2 goal, std::span<const Obstacle> obstacles, Vec2 velocity) {
  const Vec2 x = goal - p;
  const Vec2 g = nearest_obstacle_offset(p, goal, obstacles);
  return {{x.x, x.y}, {g.x, g.y}, {velocity.x, velocity.y}};
}

/// Local points: X = goal - p, gamma = nearest obstacle - p (obstacles at the
/// state's simulated time), SM = velocity.
inline std::vector<ContextPoint> to_local_points(const Demonstration& demo, double dt) {
  std::vector<ContextPoint> out;
  out.reserve(demo.states.size());
  for (const auto& s : demo.states) {
    const auto obstacles = obstacles_at(demo.scenario, demo.sim_time(s.t), dt);
    out.push_back(local_point(s.position, demo.scenario.goal, obstacles, s.velocity));
  }
  return out;
}

inline std::vector<ContextPoint> to_points(const Demonstration& demo, Mode mode, double dt) {
  return mode == Mode::Global ? to_global_points(demo) : to_local_points(demo, dt);
}

// ---------------------------------------------------------------------------
// Normalization

/// Z-score statistics for one channel group. Constant dimensions get std 1.
struct ChannelStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return (v - mean).cwiseQuotient(std); }
  Eigen::VectorXd invert(const Eigen::VectorXd& v) const { return v.cwiseProduct(std) + mean; }
  bool operator==(const ChannelStats& o) const { return mean == o.mean && std == o.std; }
};

struct NormStats {
  ChannelStats x;
  ChannelStats gamma;
  ChannelStats y;

  bool operator==(const NormStats&) const = default;
};

inline ChannelStats channel_stats(const Eigen::MatrixXd& rows) {
  ChannelStats s;
  const double n = static_cast<double>(rows.rows());
  s.mean = rows.colwise().sum().transpose() / n;
  s.std.resize(rows.cols());
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    const double var = (rows.col(c).array() - s.mean(c)).square().sum() / n;
    const double sd = std::sqrt(var);
    s.std(c) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(c))) ? sd : 1.0;
  }
  return s;
}

/// Points of one demonstration as row matrices (one row per point).
struct PointBlock {
  Eigen::MatrixXd x;
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd y;

  Eigen::Index size() const { return x.rows(); }
};

inline PointBlock to_block(const std::vector<ContextPoint>& pts, const Layout& layout) {
  PointBlock b;
  const auto n = static_cast<Eigen::Index>(pts.size());
  b.x.resize(n, layout.x_dim);
  b.gamma.resize(n, layout.gamma_dim);
  b.y.resize(n, layout.y_dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pts[static_cast<std::size_t>(i)];
    check_point(p, layout);
    for (int d = 0; d < layout.x_dim; ++d) b.x(i, d) = p.x[d];
    for (int d = 0; d < layout.gamma_dim; ++d) b.gamma(i, d) = p.gamma[d];
    for (int d = 0; d < layout.y_dim; ++d) b.y(i, d) = p.y[d];
  }
  return b;
}

inline PointBlock normalize_block(const PointBlock& b, const NormStats& s) {
  PointBlock out;
  out.x = (b.x.rowwise() - s.x.mean.transpose()).array().rowwise() / s.x.std.transpose().array();
  out.gamma = (b.gamma.rowwise() - s.gamma.mean.transpose()).array().rowwise() / s.gamma.std.transpose().array();
  out.y = (b.y.rowwise() - s.y.mean.transpose()).array().rowwise() / s.y.std.transpose().array();
  return out;
}

/// Training-ready view of a dataset for one layout: per-demo point blocks in
/// normalized units plus the statistics that produced them.
struct PointSet {
  Layout layout;
  NormStats norm;
  std::vector<PointBlock> demos;  // normalized
};

/// Statistics over every point of every demonstration in `train`.
inline NormStats compute_norm_stats(const Dataset& train, Mode mode, double dt) {
  require(train.size() >= 1, ErrorCode::InvalidArgument, "normalization needs at least one demonstration");
  const Layout layout = layout_for(mode);
  std::vector<ContextPoint> all;
  for (const auto& d : train.demos) {
    auto pts = to_points(d, mode, dt);
    all.insert(all.end(), pts.begin(), pts.end());
  }
  const PointBlock b = to_block(all, layout);
  return {channel_stats(b.x), channel_stats(b.gamma), channel_stats(b.y)};
}

/// Builds a PointSet; pass `stats` to reuse training statistics on other splits.
inline PointSet normalize(const Dataset& ds, Mode mode, double dt, const NormStats* stats = nullptr) {
  PointSet ps;
  ps.layout = layout_for(mode);
  ps.norm = stats ? *stats : compute_norm_stats(ds, mode, dt);
  ps.demos.reserve(ds.size());
  for (const auto& d : ds.demos) ps.demos.push_back(normalize_block(to_block(to_points(d, mode, dt), ps.layout), ps.norm));
  return ps;
}

// ---------------------------------------------------------------------------
// Context sampling

struct ContextSplit {
  std::vector<std::size_t> context;
  std::vector<std::size_t> targets;  // context first, then the extra points
};

struct ContextSampling {
  int n_min = 1;
  int n_max = 10;
  int m_extra = 20;
};

/// Context of uniform size in [n_min, n_max] drawn without replacement;
/// targets are the context plus m ~ U[1, m_extra] further distinct points
/// (fewer if the sequence runs out).
inline ContextSplit sample_context(std::size_t n_points, std::mt19937_64& rng, const ContextSampling& cfg) {
  require(cfg.n_min >= 1 && cfg.n_max >= cfg.n_min && cfg.m_extra >= 1, ErrorCode::InvalidArgument,
          "invalid context sampling range");
  require(n_points >= static_cast<std::size_t>(cfg.n_max), ErrorCode::InsufficientPoints,
          "sequence has " + std::to_string(n_points) + " points, need " + std::to_string(cfg.n_max));
  std::uniform_int_distribution<int> n_dist(cfg.n_min, cfg.n_max);
  std::uniform_int_distribution<int> m_dist(1, cfg.m_extra);
  const auto n = static_cast<std::size_t>(n_dist(rng));
  const auto m = std::min(static_cast<std::size_t>(m_dist(rng)), n_points - n);
  // Partial Fisher-Yates over the index range.
  std::vector<std::size_t> idx(n_points);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n + m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_points - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  ContextSplit out;
  out.context.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  out.targets.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n + m));
  return out;
}

/// Disjoint partition by demonstration: round(ratio * N) demos go to train.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double ratio, std::uint64_t seed) {
  require(ratio > 0.0 && ratio < 1.0, ErrorCode::InvalidArgument, "split ratio must be in (0, 1)");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ds.size())));
  std::pair<Dataset, Dataset> out;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? out.first : out.second).demos.push_back(ds.demos[order[i]]);
  return out;
}

// ---------------------------------------------------------------------------
// JSONL persistence

inline Json demo_to_json(const Demonstration& d, const std::string& layout = {}) {
  Json states = Json::array();
  for (const auto& s : d.states)
    states.push_back(Json::array({s.t, s.position.x, s.position.y, s.velocity.x, s.velocity.y}));
  Json j = {{"gamma", d.gamma},
             {"states", std::move(states)},
             {"reached_goal", d.reached_goal},
             {"collided", d.collided},
             {"scenario", scenario_to_json(d.scenario)},
             {"duration", d.duration}};
  if (!layout.empty()) j["layout"] = layout;
  return j;
}

inline Demonstration demo_from_json(const Json& j) {
  Demonstration d;
  d.gamma = j.at("gamma").get<std::vector<double>>();
  for (const auto& row : j.at("states")) {
    if (!row.is_array() || row.size() != 5) throw std::invalid_argument("state rows must be [t,px,py,vx,vy]");
    d.states.push_back({row[0].get<double>(), {row[1].get<double>(), row[2].get<double>()},
                        {row[3].get<double>(), row[4].get<double>()}});
  }
  d.reached_goal = j.at("reached_goal").get<bool>();
  d.collided = j.at("collided").get<bool>();
  d.scenario = scenario_from_json(j.at("scenario"));
  d.duration = j.at("duration").get<double>();
  return d;
}

inline void save_demos(const std::vector<Demonstration>& demos, const std::string& path,
                       const std::string& layout = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  for (const auto& d : demos) out << demo_to_json(d, layout).dump() << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for " + path);
}

inline void save(const Dataset& ds, const std::string& path) { save_demos(ds.demos, path, ds.layout); }

inline Dataset load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      const std::string layout = j.is_object() ? j.value("layout", std::string()) : std::string();
      if (ds.demos.empty()) ds.layout = layout;
      if (layout != ds.layout) throw std::invalid_argument("records disagree on the dataset layout");
      ds.demos.push_back(demo_from_json(j));
    } catch (const std::exception& e) {
      throw MalformedRecordError(line_no, e.what());
    }
  }
  if (ds.demos.empty()) throw MalformedRecordError(line_no, "no demonstrations in " + path);
  return ds;
}

}  // namespace socnav
