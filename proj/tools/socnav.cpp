// socnav: data generation, training, planning, rollout and evaluation for the
// CNP navigation planners.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "socnav/cli.hpp"

namespace fs = std::filesystem;
using namespace socnav;
using namespace socnav::cli;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig effective_config(const std::string& config_path, RunConfig base = {}) {
  if (!config_path.empty()) return load_config(config_path, std::move(base));
  std::istringstream empty;
  return parse_config(empty, std::move(base));
}

void require_input(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::Io, std::string(what) + " not found: " + path);
}

/// Outputs are write-once: refuse to replace an existing file unless forced,
/// and check the parent directory before any long-running work.
void check_output(const std::string& path, bool force) {
  if (path.empty()) return;
  if (fs::exists(path) && !force) throw UsageError("refusing to overwrite " + path + " (use --force)");
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw UsageError("output directory does not exist: " + parent.string());
}

bool is_ffnn_checkpoint(const std::string& path) {
  const Json j = read_json_file(path);
  return j.is_object() && j.value("kind", std::string()) == "ffnn";
}

void write_loss_csv(const std::vector<double>& losses, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out << "step,loss,windowed_loss\n";
  char buf[96];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", i, losses[i], windowed_mean(losses, i + 1, 1000));
    out << buf;
  }
}

void save_trace(const Demonstration& d, const std::string& path) { save_demos({d}, path); }

struct Options {
  std::string config;
  bool force = false;
  // gen-data
  std::size_t n = 1000;
  std::uint64_t seed = 42;
  std::string out;
  std::string layout;
  // train
  std::string mode = "global";
  std::string data;
  std::optional<int> steps;
  // plan / rollout / eval
  std::string model;
  std::string scenario;
  std::optional<std::size_t> points;
  std::string out_csv;
  std::string out_svg;
  std::string out_jsonl;
  std::string baseline;
  std::string local_model;
  std::string report;
};

int gen_data(const Options& o) {
  if (o.n < 1) throw UsageError("--n must be >= 1");
  RunConfig base;
  base.sampling = sampling_preset(o.layout);
  const RunConfig cfg = effective_config(o.config, base);
  check_output(o.out, o.force);
  GenerationSummary summary;
  Dataset ds = generate_dataset(o.n, cfg.sampling, cfg.sfm, o.seed, &summary);
  ds.layout = o.layout;
  save(ds, o.out);
  std::printf("wrote %zu demonstrations to %s\n", ds.size(), o.out.c_str());
  std::printf("rollouts %zu, reach rate before filtering %.4f\n", summary.attempts, summary.reach_rate());
  std::printf("obstacle histogram:");
  for (const auto& [count, demos] : summary.obstacle_histogram) std::printf(" %zu:%zu", count, demos);
  std::printf("\n");
  return kOk;
}

int train_cmd(const Options& o) {
  const Mode mode = mode_from_string(o.mode);
  const RunConfig cfg = effective_config(o.config);
  TrainConfig tc = cfg.train_config(mode);
  if (o.steps) tc.steps = *o.steps;
  tc.validate();
  require_input(o.data, "dataset");
  check_output(o.out, o.force);
  check_output(o.out + ".loss.csv", o.force);
  const Dataset ds = load(o.data);
  if (!ds.layout.empty() && ds.layout != to_string(mode))
    throw Error(ErrorCode::DimensionMismatch, "dataset was generated for the " + ds.layout + " layout");
  TrainResult res = train(normalize(ds, mode, cfg.sfm.dt), tc, [&](int step, double) {
    if ((step + 1) % 10000 == 0) std::fprintf(stderr, "step %d\n", step + 1);
  });
  if (mode == Mode::Local) res.model.fixed_context = local_context(ds, cfg.sfm.dt, cfg.local_context_seed);
  save_model(res.model, o.out);
  write_loss_csv(res.losses, o.out + ".loss.csv");
  std::printf("final windowed loss %.6f\n", windowed_mean(res.losses, res.losses.size(), 1000));
  return kOk;
}

int train_baseline_cmd(const Options& o) {
  RunConfig cfg = effective_config(o.config);
  if (o.steps) cfg.baseline.steps = *o.steps;
  cfg.baseline.validate();
  require_input(o.data, "dataset");
  check_output(o.out, o.force);
  check_output(o.out + ".loss.csv", o.force);
  const Dataset ds = load(o.data);
  if (!ds.layout.empty() && ds.layout != "global")
    throw Error(ErrorCode::DimensionMismatch, "the baseline needs a global-layout dataset");
  const FfnnTrainResult res = train_ffnn(normalize(ds, Mode::Global, cfg.sfm.dt), cfg.baseline);
  save_ffnn(res.model, o.out);
  write_loss_csv(res.losses, o.out + ".loss.csv");
  std::printf("final windowed loss %.6f\n", windowed_mean(res.losses, res.losses.size(), 1000));
  return kOk;
}

int plan_cmd(const Options& o) {
  const RunConfig cfg = effective_config(o.config);
  const std::size_t n = o.points.value_or(cfg.plan_points);
  if (n < 2) throw UsageError("--points must be >= 2");
  require_input(o.model, "model");
  require_input(o.scenario, "scenario");
  check_output(o.out_csv, o.force);
  check_output(o.out_svg, o.force);
  const Scenario s = load_scenario(o.scenario);
  GlobalPlan plan;
  std::string name;
  if (is_ffnn_checkpoint(o.model)) {
    plan = plan_ffnn(load_ffnn(o.model), s, n);
    name = "NN";
  } else {
    plan = plan_global(load_model(o.model), s, n);
    name = "CNP";
  }
  if (!o.out_csv.empty()) export_plan_csv(plan, o.out_csv);
  if (!o.out_svg.empty()) export_svg(s, {{name, plan.points}}, o.out_svg);
  std::printf("plan %zu points, clearance %.4f m, end error %.4f m\n", plan.points.size(),
              plan_clearance(plan.points, s, cfg.sfm.robot_radius), distance(plan.points.back(), s.goal));
  return kOk;
}

int rollout_cmd(const Options& o) {
  const RunConfig cfg = effective_config(o.config);
  require_input(o.model, "model");
  require_input(o.scenario, "scenario");
  check_output(o.out_jsonl, o.force);
  check_output(o.out_svg, o.force);
  const Scenario s = load_scenario(o.scenario);
  const CnpModel model = load_model(o.model);
  require_layout(model, Mode::Local);
  const Demonstration trace = run_local(model, s, cfg.sfm);
  if (!o.out_jsonl.empty()) save_trace(trace, o.out_jsonl);
  if (!o.out_svg.empty()) export_svg(s, {{"CNP", trace.positions()}}, o.out_svg);
  std::printf("reached %s, collided %s, steps %zu, min clearance %.4f m\n", trace.reached_goal ? "yes" : "no",
              trace.collided ? "yes" : "no", trace.states.size(), demo_min_clearance(trace, cfg.sfm));
  return kOk;
}

int eval_cmd(const Options& o) {
  if (o.n < 1) throw UsageError("--n must be >= 1");
  RunConfig base;
  base.sampling = global_sampling();
  const RunConfig cfg = effective_config(o.config, base);
  require_input(o.model, "model");
  require_input(o.baseline, "baseline");
  if (!o.local_model.empty()) require_input(o.local_model, "local model");
  check_output(o.report, o.force);
  const CnpModel model = load_model(o.model);
  require_layout(model, Mode::Global);
  const FfnnModel baseline = load_ffnn(o.baseline);
  std::optional<CnpModel> local;
  if (!o.local_model.empty()) {
    local = load_model(o.local_model);
    require_layout(*local, Mode::Local);
  }

  Dataset held_out;
  try {
    held_out = generate_dataset(o.n, cfg.sampling, cfg.sfm, eval_seed(o.seed));
  } catch (const Error& e) {
    throw Error(ErrorCode::ScenarioSetMismatch, std::string("cannot build the evaluation set: ") + e.what());
  }
  std::vector<Scenario> scenarios;
  std::vector<GlobalPlan> cnp_plans, nn_plans;
  for (const auto& d : held_out.demos) {
    scenarios.push_back(d.scenario);
    cnp_plans.push_back(plan_global(model, d.scenario, cfg.plan_points));
    nn_plans.push_back(plan_ffnn(baseline, d.scenario, cfg.plan_points));
  }
  const double rr = cfg.sfm.robot_radius;
  const Comparison c = compare(evaluate_global(cnp_plans, scenarios, held_out.demos, rr),
                               evaluate_global(nn_plans, scenarios, held_out.demos, rr));
  const Json run{{"n", o.n}, {"seed", o.seed}, {"model", fs::path(o.model).filename().string()},
                 {"baseline", fs::path(o.baseline).filename().string()}};
  Json report = comparison_to_json(c, config_digest(cfg, run));
  if (local) {
    RunConfig lcfg = cfg;
    lcfg.sampling = SamplingConfig{};
    const Dataset local_set = generate_dataset(o.n, lcfg.sampling, cfg.sfm, eval_seed(o.seed) + 1);
    std::vector<Scenario> ls;
    std::vector<Demonstration> traces;
    for (const auto& d : local_set.demos) {
      ls.push_back(d.scenario);
      traces.push_back(run_local(*local, d.scenario, cfg.sfm));
    }
    report["local"] = metrics_to_json(evaluate_local(traces, ls, cfg.sfm));
  }
  write_json_file(report, o.report);
  std::printf("collision-free: CNP %.3f, NN %.3f (margin met: %s)\n", c.cnp.collision_free_rate,
              c.baseline.collision_free_rate, c.cnp_margin_met ? "yes" : "no");
  std::printf("goal reach: CNP %.3f, NN %.3f\n", c.cnp.goal_reach_rate, c.baseline.goal_reach_rate);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CNP-based social navigation: data, training, planning and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "INI configuration file");
    sub->add_flag("--force", o.force, "overwrite existing outputs");
  };

  auto* gen = app.add_subcommand("gen-data", "generate SFM demonstrations as JSONL");
  gen->add_option("--n", o.n, "number of demonstrations")->required();
  gen->add_option("--seed", o.seed, "base seed");
  gen->add_option("--out", o.out, "output JSONL")->required();
  gen->add_option("--layout", o.layout, "sampling preset and dataset tag")->check(CLI::IsMember({"global", "local"}));
  common(gen);

  auto* tr = app.add_subcommand("train", "train a CNP");
  tr->add_option("--mode", o.mode, "global or local")->check(CLI::IsMember({"global", "local"}));
  tr->add_option("--data", o.data, "dataset JSONL")->required();
  tr->add_option("--out", o.out, "checkpoint path")->required();
  tr->add_option("--steps", o.steps, "optimizer steps");
  common(tr);

  auto* tb = app.add_subcommand("train-baseline", "train the feed-forward baseline");
  tb->add_option("--data", o.data, "dataset JSONL")->required();
  tb->add_option("--out", o.out, "checkpoint path")->required();
  tb->add_option("--steps", o.steps, "optimizer steps");
  common(tb);

  auto* pl = app.add_subcommand("plan", "plan a global path for a scenario");
  pl->add_option("--model", o.model, "global CNP or baseline checkpoint")->required();
  pl->add_option("--scenario", o.scenario, "scenario JSON")->required();
  pl->add_option("--points", o.points, "plan points");
  pl->add_option("--out-csv", o.out_csv, "plan CSV");
  pl->add_option("--out-svg", o.out_svg, "plan SVG");
  common(pl);

  auto* ro = app.add_subcommand("rollout", "closed-loop run of the local CNP");
  ro->add_option("--model", o.model, "local CNP checkpoint")->required();
  ro->add_option("--scenario", o.scenario, "scenario JSON")->required();
  ro->add_option("--out-jsonl", o.out_jsonl, "trace JSONL");
  ro->add_option("--out-svg", o.out_svg, "trace SVG");
  common(ro);

  auto* ev = app.add_subcommand("eval", "compare the global CNP with the baseline on held-out scenarios");
  ev->add_option("--model", o.model, "global CNP checkpoint")->required();
  ev->add_option("--baseline", o.baseline, "baseline checkpoint")->required();
  ev->add_option("--n", o.n, "number of held-out scenarios");
  ev->add_option("--seed", o.seed, "evaluation seed");
  ev->add_option("--report", o.report, "report JSON")->required();
  ev->add_option("--local-model", o.local_model, "also evaluate this local CNP in closed loop");
  common(ev);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return gen_data(o);
    if (*tr) return train_cmd(o);
    if (*tb) return train_baseline_cmd(o);
    if (*pl) return plan_cmd(o);
    if (*ro) return rollout_cmd(o);
    if (*ev) return eval_cmd(o);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", to_string(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInternal;
  }
  return kUsage;
}
