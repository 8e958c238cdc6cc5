#include <algorithm>
#include <random>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <gtest/gtest.h>

#include "socnav/eval.hpp"
#include "test_support.hpp"

namespace socnav {
namespace {

using socnav::testing::read_file;
using socnav::testing::scratch_dir;

const SfmParams kParams;

bool well_formed_xml(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_xml(in, tree);
  } catch (const boost::property_tree::xml_parser_error&) {
    return false;
  }
  return tree.count("svg") == 1;
}

struct OracleSet {
  std::vector<Scenario> scenarios;
  std::vector<Demonstration> demos;
};

OracleSet oracle_set(std::size_t n, std::uint64_t seed) {
  OracleSet o;
  for (auto& d : generate_dataset(n, SamplingConfig{}, kParams, seed).demos) {
    o.scenarios.push_back(d.scenario);
    o.demos.push_back(std::move(d));
  }
  return o;
}

std::vector<GlobalPlan> as_plans(const std::vector<Demonstration>& demos) {
  std::vector<GlobalPlan> plans;
  for (const auto& d : demos) plans.push_back(demo_as_plan(d));
  return plans;
}

Scenario midpoint_scenario() {
  Scenario s;
  s.start = {1.0, 5.0};
  s.goal = {9.0, 5.0};
  s.obstacles = {{{5.0, 5.0}, {}, 0.4}};
  s.bounds = {0.0, 0.0, 10.0, 10.0};
  return s;
}

TEST(EvaluateGlobal, OracleIsSelfConsistent) {
  const OracleSet o = oracle_set(25, 3);
  const Metrics m = evaluate_global(as_plans(o.demos), o.scenarios, o.demos, kParams.robot_radius);
  EXPECT_EQ(m.collision_free_rate, 1.0);
  EXPECT_EQ(m.goal_reach_rate, 1.0);
  EXPECT_NEAR(m.ade, 0.0, 1e-12);
  EXPECT_NEAR(m.fde, 0.0, 1e-12);
  EXPECT_EQ(m.n_scenarios, 25u);
  EXPECT_GE(m.mean_path_length_ratio, 1.0);
  EXPECT_GT(m.mean_min_clearance, 0.0);
}

TEST(EvaluateGlobal, StraightLineThroughObstacleCollides) {
  const Scenario s = midpoint_scenario();
  const Demonstration oracle = resample(rollout(s, kParams));
  GlobalPlan straight;
  straight.phases = phase_grid(50);
  for (double t : straight.phases) straight.points.push_back(s.start + (s.goal - s.start) * t);
  const Metrics m = evaluate_global({straight}, {s}, {oracle}, kParams.robot_radius);
  EXPECT_EQ(m.collision_free_rate, 0.0);
  EXPECT_EQ(m.goal_reach_rate, 1.0);
  EXPECT_NEAR(m.mean_min_clearance, -(kParams.robot_radius + 0.4), 1e-12);
  EXPECT_NEAR(m.mean_path_length_ratio, 1.0, 1e-12);
  EXPECT_GT(m.ade, 0.0);
}

TEST(EvaluateGlobal, ReachUsesPlanTolerance) {
  const Scenario s = midpoint_scenario();
  const Demonstration oracle = resample(rollout(s, kParams));
  GlobalPlan near = demo_as_plan(oracle), far = demo_as_plan(oracle);
  near.points.back() = s.goal + Vec2{0.29, 0.0};
  far.points.back() = s.goal + Vec2{0.31, 0.0};
  EXPECT_EQ(evaluate_global({near}, {s}, {oracle}, 0.2).goal_reach_rate, 1.0);
  EXPECT_EQ(evaluate_global({far}, {s}, {oracle}, 0.2).goal_reach_rate, 0.0);
}

TEST(EvaluateGlobal, PermutationInvariantOverScenarios) {
  const OracleSet o = oracle_set(30, 8);
  // Perturbed plans so every metric is non-trivial.
  auto plans = as_plans(o.demos);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 0.2);
  for (auto& p : plans)
    for (auto& q : p.points) q += Vec2{g(rng), g(rng)};
  const Metrics base = evaluate_global(plans, o.scenarios, o.demos, 0.2);
  std::vector<std::size_t> order(plans.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int k = 0; k < 10; ++k) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<GlobalPlan> p2;
    std::vector<Scenario> s2;
    std::vector<Demonstration> d2;
    for (std::size_t i : order) {
      p2.push_back(plans[i]);
      s2.push_back(o.scenarios[i]);
      d2.push_back(o.demos[i]);
    }
    const Metrics m = evaluate_global(p2, s2, d2, 0.2);
    EXPECT_EQ(m.goal_reach_rate, base.goal_reach_rate);
    EXPECT_EQ(m.collision_free_rate, base.collision_free_rate);
    EXPECT_EQ(m.mean_min_clearance, base.mean_min_clearance);
    EXPECT_EQ(m.mean_path_length_ratio, base.mean_path_length_ratio);
    EXPECT_EQ(m.ade, base.ade);
    EXPECT_EQ(m.fde, base.fde);
    EXPECT_EQ(m.scenario_digest, base.scenario_digest);
  }
}

TEST(EvaluateGlobal, MisalignedInputsAreRejected) {
  const OracleSet o = oracle_set(3, 1);
  auto plans = as_plans(o.demos);
  plans.pop_back();
  try {
    evaluate_global(plans, o.scenarios, o.demos, 0.2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(EvaluateLocal, OracleTracesAreClean) {
  const OracleSet o = oracle_set(20, 12);
  std::vector<Demonstration> raw;
  for (const auto& s : o.scenarios) raw.push_back(rollout(s, kParams));
  const Metrics m = evaluate_local(raw, o.scenarios, kParams);
  EXPECT_EQ(m.goal_reach_rate, 1.0);
  EXPECT_EQ(m.collision_free_rate, 1.0);
  EXPECT_NEAR(m.ade, 0.0, 1e-12);
  EXPECT_THROW(evaluate_local(raw, {o.scenarios.front()}, kParams), Error);
}

TEST(Compare, IdenticalInputsGiveZeroDeltas) {
  const OracleSet o = oracle_set(10, 2);
  const Metrics m = evaluate_global(as_plans(o.demos), o.scenarios, o.demos, 0.2);
  const Comparison c = compare(m, m);
  EXPECT_EQ(c.deltas.goal_reach_rate, 0.0);
  EXPECT_EQ(c.deltas.collision_free_rate, 0.0);
  EXPECT_EQ(c.deltas.mean_min_clearance, 0.0);
  EXPECT_EQ(c.deltas.mean_path_length_ratio, 0.0);
  EXPECT_EQ(c.deltas.ade, 0.0);
  EXPECT_EQ(c.deltas.fde, 0.0);
  EXPECT_FALSE(c.cnp_collision_free_higher);
  EXPECT_FALSE(c.cnp_margin_met);
}

TEST(Compare, MarginFlag) {
  Metrics cnp, base;
  cnp.n_scenarios = base.n_scenarios = 100;
  cnp.scenario_digest = base.scenario_digest = "x";
  cnp.collision_free_rate = 0.85;
  base.collision_free_rate = 0.70;
  EXPECT_TRUE(compare(cnp, base).cnp_margin_met);
  base.collision_free_rate = 0.71;
  const Comparison c = compare(cnp, base);
  EXPECT_FALSE(c.cnp_margin_met);
  EXPECT_TRUE(c.cnp_collision_free_higher);
}

TEST(Compare, DifferentScenarioSetsAreRejected) {
  const OracleSet a = oracle_set(5, 2), b = oracle_set(5, 3);
  const Metrics ma = evaluate_global(as_plans(a.demos), a.scenarios, a.demos, 0.2);
  const Metrics mb = evaluate_global(as_plans(b.demos), b.scenarios, b.demos, 0.2);
  try {
    compare(ma, mb);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ScenarioSetMismatch);
  }
}

TEST(Report, JsonShapeAndRoundTrip) {
  const OracleSet o = oracle_set(6, 5);
  const Metrics m = evaluate_global(as_plans(o.demos), o.scenarios, o.demos, 0.2);
  const Json j = comparison_to_json(compare(m, m), "abc123");
  for (const char* key : {"cnp", "baseline", "deltas", "flags", "config_digest"}) EXPECT_TRUE(j.contains(key));
  EXPECT_EQ(j["config_digest"], "abc123");
  const Json reparsed = Json::parse(j.dump());
  const Metrics back = metrics_from_json(reparsed["cnp"]);
  EXPECT_EQ(back.collision_free_rate, m.collision_free_rate);
  EXPECT_EQ(back.ade, m.ade);
  EXPECT_EQ(back.scenario_digest, m.scenario_digest);
}

TEST(Svg, SceneOnlyIsWellFormed) {
  EXPECT_TRUE(well_formed_xml(render_svg(midpoint_scenario(), {})));
}

TEST(Svg, DeterministicFile) {
  const auto dir = scratch_dir();
  const Scenario s = moving_obstacle_scenario();
  const std::vector<NamedPath> paths{{"SFM", resample(rollout(s, kParams)).positions()}};
  export_svg(s, paths, (dir / "a.svg").string());
  export_svg(s, paths, (dir / "b.svg").string());
  EXPECT_EQ(read_file(dir / "a.svg"), read_file(dir / "b.svg"));
  EXPECT_TRUE(well_formed_xml(read_file(dir / "a.svg")));
}

TEST(Svg, NamedPathsGetDistinctStylesAndLegend) {
  const Scenario s = midpoint_scenario();
  const std::string svg =
      render_svg(s, {{"CNP", {{1.0, 5.0}, {5.0, 6.0}, {9.0, 5.0}}}, {"NN", {{1.0, 5.0}, {9.0, 5.0}}}});
  EXPECT_TRUE(well_formed_xml(svg));
  const auto cnp = svg.find("data-name=\"CNP\"");
  const auto nn = svg.find("data-name=\"NN\"");
  ASSERT_NE(cnp, std::string::npos);
  ASSERT_NE(nn, std::string::npos);
  auto stroke_of = [&](std::size_t at) {
    const auto line_end = svg.find('\n', at);
    const auto k = svg.find("stroke=\"", at);
    EXPECT_LT(k, line_end);
    return svg.substr(k, svg.find('"', k + 8) - k);
  };
  EXPECT_NE(stroke_of(cnp), stroke_of(nn));
  EXPECT_NE(svg.find(">CNP</text>"), std::string::npos);
  EXPECT_NE(svg.find(">NN</text>"), std::string::npos);
}

TEST(Svg, DynamicObstacleHasDashedTrack) {
  const std::string svg = render_svg(moving_obstacle_scenario(), {});
  EXPECT_NE(svg.find("stroke=\"gray\" stroke-dasharray"), std::string::npos);
  EXPECT_EQ(render_svg(stationary_obstacles_scenario(), {}).find("stroke=\"gray\""), std::string::npos);
}

TEST(Svg, NamesAreEscaped) {
  EXPECT_TRUE(well_formed_xml(render_svg(midpoint_scenario(), {{"a<b & \"c\"", {{1.0, 1.0}, {2.0, 2.0}}}})));
}

TEST(Svg, UnwritablePathIsIo) {
  try {
    export_svg(midpoint_scenario(), {}, (scratch_dir() / "missing" / "x.svg").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(FigureScenarios, OracleSolvesBoth) {
  for (const Scenario& s : {moving_obstacle_scenario(), stationary_obstacles_scenario()}) {
    EXPECT_NO_THROW(validate_scenario(s, kParams.robot_radius, 3.0));
    EXPECT_TRUE(rollout(s, kParams).clean());
  }
}

}  // namespace
}  // namespace socnav
