#pragma once

// Run configuration for the command-line tool: an INI file with [sfm],
// [sampling], [train], [baseline] and [eval] sections layered over per-layout
// presets, plus the digest embedded in reports.

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "socnav/cnp.hpp"
#include "socnav/eval.hpp"
#include "socnav/planners.hpp"

namespace socnav::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,         // bad flags or configuration
  kSampling = 3,      // scenario sampling exhausted
  kData = 4,          // unreadable input or layout mismatch
  kScenarioSet = 5,   // evaluation scenario set could not be built or compared
};

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return kUsage;
    case ErrorCode::SamplingExhausted: return kSampling;
    case ErrorCode::ScenarioSetMismatch: return kScenarioSet;
    default: return kData;
  }
}

/// Salt mixed into evaluation seeds so held-out scenarios never reuse the
/// per-demo streams (seed + i) of generated training data.
inline constexpr std::uint64_t kEvalSeedSalt = 0x5deece66dULL << 20;

inline std::uint64_t eval_seed(std::uint64_t seed) { return (seed ^ kEvalSeedSalt) * 0x9e3779b97f4a7c15ULL; }

struct RunConfig {
  SfmParams sfm;
  SamplingConfig sampling;
  TrainConfig train;
  FfnnConfig baseline;
  // Local models train longer than global ones; train.steps covers global.
  int local_steps = 150000;
  std::uint64_t local_context_seed = 5;
  std::size_t plan_points = 200;

  TrainConfig train_config(Mode mode) const {
    TrainConfig t = train;
    if (mode == Mode::Local) t.steps = local_steps;
    return t;
  }
};

/// Single static obstacle near the start-goal segment: the global-planner
/// training and evaluation setting.
inline SamplingConfig global_sampling() {
  SamplingConfig s;
  s.obstacle_count_min = s.obstacle_count_max = 1;
  s.p_dynamic = 0.0;
  s.placement = Placement::OnSegment;
  return s;
}

/// Local-planner training data: the default obstacle mix, with half of the
/// scenarios placing their obstacles along the start-goal segment so close
/// interactions are well represented.
inline SamplingConfig local_sampling() {
  SamplingConfig s;
  s.placement = Placement::Mixed;
  s.segment_min = 0.2;
  s.segment_max = 0.8;
  s.lateral_max = 1.0;
  return s;
}

/// Training preset per layout tag; an empty tag is the default sampling.
inline SamplingConfig sampling_preset(const std::string& layout) {
  if (layout == "global") return global_sampling();
  if (layout == "local") return local_sampling();
  require(layout.empty(), ErrorCode::InvalidArgument, "unknown layout '" + layout + "'");
  return SamplingConfig{};
}

namespace detail {

inline const char* to_string(Placement p) {
  switch (p) {
    case Placement::Uniform: return "uniform";
    case Placement::OnSegment: return "on_segment";
    case Placement::Mixed: return "mixed";
  }
  return "uniform";
}

inline Placement placement_from_string(const std::string& key, const std::string& v) {
  if (v == "uniform") return Placement::Uniform;
  if (v == "on_segment") return Placement::OnSegment;
  require(v == "mixed", ErrorCode::InvalidArgument, key + " must be uniform, on_segment or mixed");
  return Placement::Mixed;
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == v.size() && !v.empty() && std::isfinite(out), ErrorCode::InvalidArgument,
          key + ": '" + v + "' is not a number");
  return out;
}

inline long long to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  require(d == std::floor(d) && std::abs(d) < 9e15, ErrorCode::InvalidArgument, key + ": '" + v + "' is not an integer");
  return static_cast<long long>(d);
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    out.push_back(static_cast<int>(to_int(key, item)));
  }
  require(!out.empty(), ErrorCode::InvalidArgument, key + " must list at least one width");
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <typename T>
Setter real(T RunConfig::*group, double T::*field) {
  return [=](RunConfig& c, const std::string& k, const std::string& v) { (c.*group).*field = to_double(k, v); };
}

template <typename T, typename I>
Setter integer(T RunConfig::*group, I T::*field) {
  return [=](RunConfig& c, const std::string& k, const std::string& v) {
    const long long n = to_int(k, v);
    require(n >= 0 || std::is_signed_v<I>, ErrorCode::InvalidArgument, k + " must be non-negative");
    (c.*group).*field = static_cast<I>(n);
  };
}

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    using R = RunConfig;
    t["sfm.v_des"] = real(&R::sfm, &SfmParams::v_des);
    t["sfm.tau_relax"] = real(&R::sfm, &SfmParams::tau_relax);
    t["sfm.repulsion"] = real(&R::sfm, &SfmParams::repulsion);
    t["sfm.range"] = real(&R::sfm, &SfmParams::range);
    t["sfm.robot_radius"] = real(&R::sfm, &SfmParams::robot_radius);
    t["sfm.v_max"] = real(&R::sfm, &SfmParams::v_max);
    t["sfm.dt"] = real(&R::sfm, &SfmParams::dt);
    t["sfm.goal_tol"] = real(&R::sfm, &SfmParams::goal_tol);
    t["sfm.max_steps"] = integer(&R::sfm, &SfmParams::max_steps);
    t["sfm.arrival_radius"] = real(&R::sfm, &SfmParams::arrival_radius);
    t["sfm.fluctuation"] = real(&R::sfm, &SfmParams::fluctuation);

    t["sampling.xmin"] = [](R& c, const std::string& k, const std::string& v) { c.sampling.bounds.xmin = to_double(k, v); };
    t["sampling.ymin"] = [](R& c, const std::string& k, const std::string& v) { c.sampling.bounds.ymin = to_double(k, v); };
    t["sampling.xmax"] = [](R& c, const std::string& k, const std::string& v) { c.sampling.bounds.xmax = to_double(k, v); };
    t["sampling.ymax"] = [](R& c, const std::string& k, const std::string& v) { c.sampling.bounds.ymax = to_double(k, v); };
    t["sampling.min_task_distance"] = real(&R::sampling, &SamplingConfig::min_task_distance);
    t["sampling.obstacle_count_min"] = integer(&R::sampling, &SamplingConfig::obstacle_count_min);
    t["sampling.obstacle_count_max"] = integer(&R::sampling, &SamplingConfig::obstacle_count_max);
    t["sampling.obstacle_radius_min"] = real(&R::sampling, &SamplingConfig::obstacle_radius_min);
    t["sampling.obstacle_radius_max"] = real(&R::sampling, &SamplingConfig::obstacle_radius_max);
    t["sampling.p_dynamic"] = real(&R::sampling, &SamplingConfig::p_dynamic);
    t["sampling.obstacle_speed_max"] = real(&R::sampling, &SamplingConfig::obstacle_speed_max);
    t["sampling.robot_radius"] = real(&R::sampling, &SamplingConfig::robot_radius);
    t["sampling.placement"] = [](R& c, const std::string& k, const std::string& v) {
      c.sampling.placement = placement_from_string(k, v);
    };
    t["sampling.segment_min"] = real(&R::sampling, &SamplingConfig::segment_min);
    t["sampling.segment_max"] = real(&R::sampling, &SamplingConfig::segment_max);
    t["sampling.lateral_max"] = real(&R::sampling, &SamplingConfig::lateral_max);
    t["sampling.mixed_on_segment"] = real(&R::sampling, &SamplingConfig::mixed_on_segment);
    t["sampling.max_attempts"] = integer(&R::sampling, &SamplingConfig::max_attempts);

    t["train.steps"] = integer(&R::train, &TrainConfig::steps);
    t["train.learning_rate"] = [](R& c, const std::string& k, const std::string& v) { c.train.adam.learning_rate = to_double(k, v); };
    t["train.beta1"] = [](R& c, const std::string& k, const std::string& v) { c.train.adam.beta1 = to_double(k, v); };
    t["train.beta2"] = [](R& c, const std::string& k, const std::string& v) { c.train.adam.beta2 = to_double(k, v); };
    t["train.epsilon"] = [](R& c, const std::string& k, const std::string& v) { c.train.adam.epsilon = to_double(k, v); };
    t["train.seed"] = integer(&R::train, &TrainConfig::seed);
    t["train.d_r"] = integer(&R::train, &TrainConfig::d_r);
    t["train.encoder_hidden"] = [](R& c, const std::string& k, const std::string& v) { c.train.encoder_hidden = to_int_list(k, v); };
    t["train.query_hidden"] = [](R& c, const std::string& k, const std::string& v) { c.train.query_hidden = to_int_list(k, v); };
    t["train.sigma_floor"] = real(&R::train, &TrainConfig::sigma_floor);
    t["train.n_min"] = [](R& c, const std::string& k, const std::string& v) { c.train.sampling.n_min = static_cast<int>(to_int(k, v)); };
    t["train.n_max"] = [](R& c, const std::string& k, const std::string& v) { c.train.sampling.n_max = static_cast<int>(to_int(k, v)); };
    t["train.m_extra"] = [](R& c, const std::string& k, const std::string& v) { c.train.sampling.m_extra = static_cast<int>(to_int(k, v)); };
    t["train.endpoint_context_prob"] = real(&R::train, &TrainConfig::endpoint_context_prob);
    t["train.grad_clip"] = real(&R::train, &TrainConfig::grad_clip);
    t["train.local_steps"] = [](R& c, const std::string& k, const std::string& v) {
      const long long n = to_int(k, v);
      require(n >= 1, ErrorCode::InvalidArgument, k + " must be >= 1");
      c.local_steps = static_cast<int>(n);
    };
    t["train.local_context_seed"] = [](R& c, const std::string& k, const std::string& v) {
      c.local_context_seed = static_cast<std::uint64_t>(to_int(k, v));
    };

    t["baseline.steps"] = integer(&R::baseline, &FfnnConfig::steps);
    t["baseline.learning_rate"] = [](R& c, const std::string& k, const std::string& v) { c.baseline.adam.learning_rate = to_double(k, v); };
    t["baseline.seed"] = integer(&R::baseline, &FfnnConfig::seed);
    t["baseline.hidden"] = [](R& c, const std::string& k, const std::string& v) { c.baseline.hidden = to_int_list(k, v); };
    t["baseline.batch_size"] = integer(&R::baseline, &FfnnConfig::batch_size);

    t["eval.plan_points"] = [](R& c, const std::string& k, const std::string& v) {
      const long long n = to_int(k, v);
      require(n >= 2, ErrorCode::InvalidArgument, k + " must be >= 2");
      c.plan_points = static_cast<std::size_t>(n);
    };
    return t;
  }();
  return table;
}

}  // namespace detail

/// Applies INI text over `base`. Unknown sections or keys, keys outside a
/// section, and malformed values are InvalidArgument.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
  const auto& table = detail::setters();
  for (const auto& [section, keys] : tree) {
    require(!keys.empty() || keys.data().empty(), ErrorCode::InvalidArgument,
            "config: key '" + section + "' is outside a section");
    for (const auto& [key, value] : keys) {
      const std::string full = section + "." + key;
      const auto it = table.find(full);
      require(it != table.end(), ErrorCode::InvalidArgument, "config: unknown key '" + full + "'");
      it->second(base, full, value.data());
    }
  }
  base.sfm.validate();
  base.sampling.validate();
  base.train.validate();
  base.baseline.validate();
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::InvalidArgument, "cannot read config " + path);
  return parse_config(in, std::move(base));
}

/// Canonical JSON of every effective setting.
inline Json config_to_json(const RunConfig& c) {
  const auto& s = c.sfm;
  const auto& g = c.sampling;
  const auto& t = c.train;
  const auto& b = c.baseline;
  return {
      {"sfm",
       {{"v_des", s.v_des}, {"tau_relax", s.tau_relax}, {"repulsion", s.repulsion}, {"range", s.range},
        {"robot_radius", s.robot_radius}, {"v_max", s.v_max}, {"dt", s.dt}, {"goal_tol", s.goal_tol},
        {"max_steps", s.max_steps}, {"arrival_radius", s.arrival_radius}, {"fluctuation", s.fluctuation}}},
      {"sampling",
       {{"bounds", {g.bounds.xmin, g.bounds.ymin, g.bounds.xmax, g.bounds.ymax}},
        {"min_task_distance", g.min_task_distance}, {"obstacle_count", {g.obstacle_count_min, g.obstacle_count_max}},
        {"obstacle_radius", {g.obstacle_radius_min, g.obstacle_radius_max}}, {"p_dynamic", g.p_dynamic},
        {"obstacle_speed_max", g.obstacle_speed_max}, {"robot_radius", g.robot_radius},
        {"placement", detail::to_string(g.placement)}, {"mixed_on_segment", g.mixed_on_segment},
        {"segment", {g.segment_min, g.segment_max}}, {"lateral_max", g.lateral_max},
        {"max_attempts", g.max_attempts}}},
      {"train",
       {{"steps", t.steps}, {"learning_rate", t.adam.learning_rate}, {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2}, {"epsilon", t.adam.epsilon}, {"seed", t.seed}, {"d_r", t.d_r},
        {"encoder_hidden", t.encoder_hidden}, {"query_hidden", t.query_hidden}, {"sigma_floor", t.sigma_floor},
        {"context", {t.sampling.n_min, t.sampling.n_max, t.sampling.m_extra}},
        {"endpoint_context_prob", t.endpoint_context_prob}, {"grad_clip", t.grad_clip},
        {"local_steps", c.local_steps}, {"local_context_seed", c.local_context_seed}}},
      {"baseline",
       {{"steps", b.steps}, {"learning_rate", b.adam.learning_rate}, {"seed", b.seed}, {"hidden", b.hidden},
        {"batch_size", b.batch_size}}},
      {"eval", {{"plan_points", c.plan_points}}}};
}

/// Digest of the effective configuration plus command-specific extras.
inline std::string config_digest(const RunConfig& c, const Json& extra = Json::object()) {
  return fnv1a_hex(Json{{"config", config_to_json(c)}, {"run", extra}}.dump());
}

}  // namespace socnav::cli
