#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "scsp/harness.hpp"

using namespace scsp;

TEST_CASE("baseline_a_mpc_cost: alignment anchor values")
{
  const Vec3 p_obj(0.0, 0.0, 0.0);
  const Vec3 p_goal(1.0, 0.0, 0.0);
  // Fingertip directly behind the object: vectors aligned, cost -1.
  CHECK(baseline_a_mpc_cost(Vec3(-0.5, 0, 0), p_obj, p_goal) == doctest::Approx(-1.0));
  // Fingertip on the goal side: vectors opposed, cost 0.
  CHECK(baseline_a_mpc_cost(Vec3(0.5, 0, 0), p_obj, p_goal) == doctest::Approx(0.0));
  // Orthogonal: -0.5.
  CHECK(baseline_a_mpc_cost(Vec3(0, 0.5, 0), p_obj, p_goal) == doctest::Approx(-0.5));
  // Degenerate coincident points: guarded zero.
  CHECK(baseline_a_mpc_cost(p_obj, p_obj, p_goal) == 0.0);
  CHECK(baseline_a_mpc_cost(Vec3(0.5, 0, 0), p_obj, p_obj) == 0.0);
}

TEST_CASE("CSV schema is stable (golden header and row shape)")
{
  const std::string golden =
      "method,trial,seed,success,hard_error,steps,exec_time_s,wall_seconds,"
      "final_pos_error,final_quat_error,mean_plan_seconds,mean_cso_seconds,"
      "max_kkt_violation,gamma_transitions,error_message";
  CHECK(std::string(kCsvHeader) == golden);

  TrialRecord record;
  record.success = true;
  record.steps = 42;
  record.exec_time_s = 0.84;
  const std::string row = trial_csv_row("scsp", 7, 99, record);
  CHECK(row.rfind("scsp,7,99,1,0,42,0.84,", 0) == 0);
  const auto commas = std::count(row.begin(), row.end(), ',');
  CHECK(commas == 14);
}

TEST_CASE("experiment config: defaults, round trip, errors")
{
  const char* text = R"({
    "scene": {"mesh_kind": "box", "n_s": 24, "mass": 0.2},
    "planner": {"rho_bar": 0.4, "accept_when": "above", "horizon": 4},
    "task_kind": "rotation",
    "method": "a_mpc",
    "trials": 3,
    "seed_base": 17,
    "goal_distance": 0.11,
    "ns_sweep": [5, 9],
    "out_dir": "/tmp/scsp_cfg_test"
  })";
  std::ofstream("/tmp/scsp_test_config.json") << text;
  const ExperimentConfig cfg = load_experiment_config("/tmp/scsp_test_config.json");
  CHECK(cfg.scene.n_s == 24);
  CHECK(cfg.scene.mass == 0.2);
  CHECK(cfg.planner.ranking.rho_bar == 0.4);
  CHECK(cfg.planner.cpo.horizon == 4);
  CHECK(cfg.method == "a_mpc");
  CHECK(cfg.trials == 3);
  CHECK(cfg.seed_base == 17);
  CHECK(cfg.goal_distance == 0.11);
  CHECK(cfg.ns_sweep == std::vector<int>{5, 9});

  CHECK_THROWS(load_experiment_config("/tmp/missing_scsp_config.json"));
  std::ofstream("/tmp/scsp_bad_config.json") << "{not json";
  CHECK_THROWS(load_experiment_config("/tmp/scsp_bad_config.json"));
}

TEST_CASE("make_trial is deterministic per (config, method, index)")
{
  ExperimentConfig cfg;
  cfg.scene.n_s = 24;
  cfg.trials = 2;
  cfg.seed_base = 5;
  const TrialSetup a = make_trial(cfg, Method::Scsp, 1);
  const TrialSetup b = make_trial(cfg, Method::Scsp, 1);
  CHECK(a.task.goal.p == b.task.goal.p);
  CHECK(a.scene.fingertip_start == b.scene.fingertip_start);
  CHECK(a.scene.sim_params.mu_env == b.scene.sim_params.mu_env);
  CHECK(a.seed == b.seed);

  // Adversarial placement puts the fingertip between object and goal.
  ExperimentConfig adv = cfg;
  adv.battery = "adversarial";
  const TrialSetup c = make_trial(adv, Method::Scsp, 1);
  const Vec3 to_goal = (c.task.goal.p - c.scene.object_start.p).normalized();
  const Vec3 to_ee = c.scene.fingertip_start - c.scene.object_start.p;
  CHECK(to_goal.dot(Vec3(to_ee.x(), to_ee.y(), 0.0).normalized()) > 0.95);
}

TEST_CASE("summarize: error means over successful trials only")
{
  std::vector<TrialRecord> records(3);
  records[0].success = true;
  records[0].exec_time_s = 2.0;
  records[0].final_pos_error = 0.01;
  records[1].success = false;
  records[1].final_pos_error = 0.5;
  records[2].success = true;
  records[2].exec_time_s = 4.0;
  records[2].final_pos_error = 0.03;
  const MethodReport report = summarize("scsp", records);
  CHECK(report.trials == 3);
  CHECK(report.successes == 2);
  CHECK(report.success_rate == doctest::Approx(2.0 / 3.0));
  CHECK(report.mean_exec_time_s == doctest::Approx(3.0));
  CHECK(report.mean_pos_error == doctest::Approx(0.02));
}

TEST_CASE("run_batch: trivial goal gives rate 1.0 and emits the artifacts")
{
  ExperimentConfig cfg;
  cfg.scene.n_s = 24;
  cfg.trials = 2;
  cfg.seed_base = 3;
  cfg.max_steps = 50;
  cfg.goal_distance = 0.0;   // goal at the settled pose
  cfg.goal_yaw_range = 0.0;
  cfg.method = "scsp";
  cfg.out_dir = "/tmp/scsp_batch_test";
  cfg.save_trajectories = true;
  cfg.randomize_scenes = false;
  std::filesystem::remove_all(cfg.out_dir);

  const AggregateReport report = run_batch(cfg);
  REQUIRE(report.methods.size() == 1);
  CHECK(report.methods[0].success_rate == 1.0);
  CHECK(std::filesystem::exists("/tmp/scsp_batch_test/batch_scsp_results.csv"));
  CHECK(std::filesystem::exists("/tmp/scsp_batch_test/batch_scsp_report.md"));

  // CSV carries the golden header.
  std::ifstream csv("/tmp/scsp_batch_test/batch_scsp_results.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == kCsvHeader);
}

TEST_CASE("run_method: deterministic across repeated invocations")
{
  ExperimentConfig cfg;
  cfg.scene.n_s = 24;
  cfg.trials = 2;
  cfg.seed_base = 9;
  cfg.max_steps = 120;
  cfg.goal_distance = 0.1;
  const auto a = run_method(cfg, Method::CfMpc);
  const auto b = run_method(cfg, Method::CfMpc);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i)
  {
    CHECK(a[i].success == b[i].success);
    CHECK(a[i].steps == b[i].steps);
    CHECK(a[i].final_pos_error == b[i].final_pos_error);
  }
}

TEST_CASE("run_sweep: per-count reports are emitted")
{
  ExperimentConfig cfg;
  cfg.scene.n_s = 24;
  cfg.trials = 1;
  cfg.seed_base = 3;
  cfg.max_steps = 40;
  cfg.goal_distance = 0.0;
  cfg.goal_yaw_range = 0.0;
  cfg.ns_sweep = {5, 10};
  cfg.out_dir = "/tmp/scsp_sweep_test";
  cfg.randomize_scenes = false;
  std::filesystem::remove_all(cfg.out_dir);
  const AggregateReport report = run_sweep(cfg);
  CHECK(report.by_ns.size() == 2);
  CHECK(report.by_ns.count(5) == 1);
  CHECK(report.by_ns.count(10) == 1);
  CHECK(std::filesystem::exists("/tmp/scsp_sweep_test/sweep_report.md"));
}

TEST_CASE("audits pass on a fresh battery")
{
  const AuditReport report = run_audits(120, 77);
  CHECK(report.ok());
  CHECK(report.summary().find("ALL AUDITS PASS") != std::string::npos);
}

TEST_CASE("svg emitter writes a well-formed polyline plot")
{
  const std::string path = "/tmp/scsp_plot_test.svg";
  write_svg_lines(path, {{{0.0, 1.0}, {1.0, 2.0}, {2.0, 0.5}}}, "test series");
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(content.find("<svg") != std::string::npos);
  CHECK(content.find("polyline") != std::string::npos);
  CHECK(content.find("test series") != std::string::npos);
}
