#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "socnav/planners.hpp"
#include "test_support.hpp"

namespace socnav {
namespace {

using socnav::testing::read_file;
using socnav::testing::scratch_dir;

const SfmParams kParams;

TrainConfig small_config(int steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.d_r = 16;
  cfg.encoder_hidden = {32, 32};
  cfg.query_hidden = {32, 32};
  return cfg;
}

Scenario midpoint_scenario() {
  Scenario s;
  s.start = {1.0, 5.0};
  s.goal = {9.0, 5.0};
  s.obstacles = {{{5.0, 5.0}, {}, 0.4}};
  s.bounds = {0.0, 0.0, 10.0, 10.0};
  return s;
}

struct Fixture : ::testing::Test {
  static void SetUpTestSuite() {
    data = new Dataset(generate_dataset(20, SamplingConfig{}, kParams, 17));
    global_model = new CnpModel(train(normalize(*data, Mode::Global, kParams.dt), small_config(300)).model);
    CnpModel local = train(normalize(*data, Mode::Local, kParams.dt), small_config(300)).model;
    local.fixed_context = local_context(*data, kParams.dt, 5);
    local_model = new CnpModel(std::move(local));
  }
  static void TearDownTestSuite() {
    delete data;
    delete global_model;
    delete local_model;
  }
  static inline Dataset* data = nullptr;
  static inline CnpModel* global_model = nullptr;
  static inline CnpModel* local_model = nullptr;
};

TEST(PhaseGrid, EndpointsAndSpacing) {
  EXPECT_EQ(phase_grid(2), (std::vector<double>{0.0, 1.0}));
  const auto g = phase_grid(5);
  EXPECT_EQ(g, (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_THROW(phase_grid(1), Error);
}

TEST(EndpointContext, StartAtZeroGoalAtOne) {
  const Scenario s = midpoint_scenario();
  const auto ctx = endpoint_context(s);
  ASSERT_EQ(ctx.size(), 2u);
  EXPECT_EQ(ctx[0].x, std::vector<double>{0.0});
  EXPECT_EQ(ctx[0].y, (std::vector<double>{1.0, 5.0}));
  EXPECT_EQ(ctx[1].x, std::vector<double>{1.0});
  EXPECT_EQ(ctx[1].y, (std::vector<double>{9.0, 5.0}));
  EXPECT_EQ(ctx[0].gamma, global_gamma(s));
}

TEST_F(Fixture, GlobalPlanShapeAndContext) {
  const Scenario s = midpoint_scenario();
  const GlobalPlan plan = plan_global(*global_model, s, 200);
  EXPECT_EQ(plan.points.size(), 200u);
  EXPECT_EQ(plan.stds.size(), 200u);
  EXPECT_EQ(plan.phases, phase_grid(200));
  EXPECT_EQ(plan.gamma, global_gamma(s));
  EXPECT_EQ(plan.context, endpoint_context(s));
  for (const auto& sd : plan.stds) EXPECT_GT(std::min(sd.x, sd.y), 0.0);
  EXPECT_EQ(plan_global(*global_model, s, 2).points.size(), 2u);
}

TEST_F(Fixture, GlobalPlanIgnoresContextOrder) {
  const Scenario s = midpoint_scenario();
  auto ctx = endpoint_context(s);
  const GlobalPlan a = plan_global(*global_model, s, 50, ctx);
  std::swap(ctx[0], ctx[1]);
  const GlobalPlan b = plan_global(*global_model, s, 50, ctx);
  for (std::size_t k = 0; k < a.points.size(); ++k) EXPECT_LT(distance(a.points[k], b.points[k]), 1e-6);
}

TEST_F(Fixture, LayoutGuards) {
  EXPECT_THROW(plan_global(*local_model, midpoint_scenario(), 10), Error);
  EXPECT_THROW(LocalPlanner(*global_model, kParams.v_max), Error);
}

TEST_F(Fixture, LocalContextIsFixedSizeAndSeeded) {
  EXPECT_EQ(local_context(*data, kParams.dt, 3).size(), kLocalContextSize);
  EXPECT_EQ(local_context(*data, kParams.dt, 3), local_context(*data, kParams.dt, 3));
  EXPECT_NE(local_context(*data, kParams.dt, 3), local_context(*data, kParams.dt, 4));
  for (const auto& p : local_context(*data, kParams.dt, 3)) check_point(p, kLocalLayout);
}

TEST_F(Fixture, LocalContextPointsComeFromTheDataset) {
  for (const auto& p : local_context(*data, kParams.dt, 9)) {
    bool found = false;
    for (const auto& d : data->demos)
      for (const auto& q : to_local_points(d, kParams.dt)) found = found || q == p;
    EXPECT_TRUE(found);
  }
}

TEST_F(Fixture, LocalStepRespectsSpeedLimitAndMatchesPlanner) {
  const LocalPlanner planner(*local_model, 0.3);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  const std::vector<Obstacle> obs{{{5.0, 5.0}, {0.0, 0.2}, 0.3}};
  for (int i = 0; i < 100; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const Vec2 goal{u(rng), u(rng)};
    const Vec2 v = planner.command(p, goal, obs);
    EXPECT_LE(v.norm(), 0.3 + 1e-12);
    const Vec2 w = local_step(*local_model, p, goal, obs, local_model->fixed_context, 0.3);
    EXPECT_LT(distance(v, w), 1e-9);
  }
}

TEST_F(Fixture, RunLocalProducesANormalizedTrace) {
  const Demonstration d = run_local(*local_model, midpoint_scenario(), kParams);
  ASSERT_GE(d.states.size(), 2u);
  EXPECT_EQ(d.states.front().t, 0.0);
  EXPECT_EQ(d.states.back().t, 1.0);
  EXPECT_EQ(d.states.front().position, midpoint_scenario().start);
  for (const auto& s : d.states) EXPECT_LE(s.velocity.norm(), kParams.v_max + 1e-12);
}

TEST(Ffnn, ArchitectureHasFiveWeightLayers) {
  const Dataset ds = generate_dataset(3, SamplingConfig{}, kParams, 2);
  FfnnConfig cfg;
  cfg.steps = 5;
  const FfnnModel m = train_ffnn(normalize(ds, Mode::Global, kParams.dt), cfg).model;
  EXPECT_EQ(m.net.layers(), 5u);
  EXPECT_EQ(m.net.dims, (std::vector<int>{7, 128, 128, 128, 128, 2}));
  EXPECT_NO_THROW(m.check());
}

TEST(Ffnn, RejectsLocalData) {
  const Dataset ds = generate_dataset(2, SamplingConfig{}, kParams, 2);
  EXPECT_THROW(train_ffnn(normalize(ds, Mode::Local, kParams.dt), FfnnConfig{}), Error);
}

TEST(Ffnn, DeterministicAndRoundTrips) {
  const Dataset ds = generate_dataset(4, SamplingConfig{}, kParams, 6);
  const PointSet ps = normalize(ds, Mode::Global, kParams.dt);
  FfnnConfig cfg;
  cfg.steps = 50;
  cfg.hidden = {16, 16, 16, 16};
  const auto a = train_ffnn(ps, cfg);
  const auto b = train_ffnn(ps, cfg);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(a.model.net, b.model.net);
  const auto path = (scratch_dir() / "ffnn.json").string();
  save_ffnn(a.model, path);
  const FfnnModel back = load_ffnn(path);
  EXPECT_EQ(back.net, a.model.net);
  EXPECT_EQ(back.norm, a.model.norm);
  const auto p1 = plan_ffnn(a.model, midpoint_scenario(), 30);
  const auto p2 = plan_ffnn(back, midpoint_scenario(), 30);
  EXPECT_EQ(p1.points, p2.points);
  EXPECT_EQ(p1.phases, phase_grid(30));
  EXPECT_TRUE(p1.context.empty());
}

TEST(Ffnn, TrainedBaselineHitsEndpoints) {
  SamplingConfig sc;
  sc.obstacle_count_min = sc.obstacle_count_max = 1;
  sc.p_dynamic = 0.0;
  const Dataset ds = generate_dataset(300, sc, kParams, 40);
  const auto [train_set, held_out] = split(ds, 0.8, 1);
  const FfnnModel m = train_ffnn(normalize(train_set, Mode::Global, kParams.dt), FfnnConfig{}).model;
  int ok = 0;
  for (const auto& d : held_out.demos) {
    const auto plan = plan_ffnn(m, d.scenario, 200);
    ok += distance(plan.points.front(), d.scenario.start) < 0.5 && distance(plan.points.back(), d.scenario.goal) < 0.5;
  }
  EXPECT_GE(ok, static_cast<int>(std::ceil(0.8 * held_out.size())));
}

TEST_F(Fixture, PlanCsvReparses) {
  const GlobalPlan plan = plan_global(*global_model, midpoint_scenario(), 200);
  const auto path = (scratch_dir() / "plan.csv").string();
  export_plan_csv(plan, path);
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "phase,x,y,std_x,std_y");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
    ASSERT_EQ(vals.size(), 5u);
    EXPECT_EQ(vals[0], plan.phases[rows]);
    EXPECT_EQ(vals[1], plan.points[rows].x);
    EXPECT_EQ(vals[4], plan.stds[rows].y);
    ++rows;
  }
  EXPECT_EQ(rows, 200u);
}

}  // namespace
}  // namespace socnav
