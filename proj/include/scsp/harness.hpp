#pragma once

#include <map>
#include <string>
#include <vector>

#include "scsp/sim.hpp"

namespace scsp
{

// Alignment prior of the A-MPC baseline:
// -((v_obj->goal)'(v_ee->obj) + 1)/2 with unit vectors, 0 when degenerate.
double baseline_a_mpc_cost(const Vec3& p_ee, const Vec3& p_obj, const Vec3& p_goal);

// Benchmark-tuned planner defaults: the paper-literal trigger formula with
// the intuitive T1 gate (the literal gate deadlocks when the fingertip
// starts at an already-good contact), moderate CSO refresh decimation.
PlannerConfig benchmark_planner_defaults();

struct ExperimentConfig
{
  SceneConfig scene;
  PlannerConfig planner{benchmark_planner_defaults()};
  std::string task_kind{"rotation"};  // "rotation" | "flipping"
  std::string method{"scsp"};
  std::string battery{"standard"};    // "standard" | "adversarial"
  int trials{10};
  uint64_t seed_base{1};
  int max_steps{2500};
  double goal_distance{0.18};
  double goal_yaw_range{0.5};
  std::vector<int> ns_sweep{5, 10, 70, 120};
  std::string out_dir{"out"};
  bool save_trajectories{false};
  bool randomize_scenes{true};
  std::vector<DisturbanceSpec> disturbances;
};

ExperimentConfig load_experiment_config(const std::string& path);

struct TrialSetup
{
  Scene scene;
  TaskSpec task;
  PlannerConfig planner;
  uint64_t seed{0};
};

// Deterministic per-trial world: randomized scene, sampled goal, and the
// battery's fingertip placement (adversarial = on the goal side).
TrialSetup make_trial(const ExperimentConfig& config, Method method, int trial_index);

struct MethodReport
{
  std::string method;
  int trials{0};
  int successes{0};
  int hard_errors{0};
  double success_rate{0.0};
  double mean_exec_time_s{0.0};   // over successful trials
  double mean_pos_error{0.0};     // over successful trials
  double mean_quat_error{0.0};
  double mean_plan_seconds{0.0};
  double mean_cso_seconds{0.0};
  double mean_wall_seconds{0.0};
  double max_kkt_violation{0.0};
  int gamma_transitions{0};
};

struct AggregateReport
{
  std::vector<MethodReport> methods;
  std::map<int, MethodReport> by_ns;
  int total_trials{0};
  int total_hard_errors{0};
};

MethodReport summarize(const std::string& name, const std::vector<TrialRecord>& records);

// Runs the configured battery for one method (parallel across trials,
// deterministic per seed), returning the per-trial records in index order.
std::vector<TrialRecord> run_method(const ExperimentConfig& config, Method method,
                                    std::vector<TrialSetup>* setups = nullptr);

// Full batch: trials + CSV + markdown + plot emission under out_dir.
AggregateReport run_batch(const ExperimentConfig& config);

// Candidate-count sweep over ns_sweep (always the scsp method).
AggregateReport run_sweep(const ExperimentConfig& config);

extern const char* kCsvHeader;
std::string trial_csv_row(const std::string& method, int trial, uint64_t seed,
                          const TrialRecord& r);

struct AuditReport
{
  int scenes{0};
  int lemma3_checked{0};
  int lemma3_violations{0};
  int appendix_a_cases{0};
  int appendix_a_failures{0};
  int linearity_checked{0};
  int linearity_failures{0};
  int gradient_checked{0};
  int gradient_failures{0};
  int lemma4_cases{0};
  int lemma4_failures{0};
  uint64_t first_failing_seed{0};
  bool ok() const
  {
    return lemma3_violations == 0 && appendix_a_failures == 0 && linearity_failures == 0 &&
           gradient_failures == 0 && lemma4_failures == 0;
  }
  std::string summary() const;
};

// Executable audits of the surrogate guarantees: the error bound, the
// Frobenius-optimal diagonal, piecewise linearity + gradients, and the
// lift/place case split.
AuditReport run_audits(int scenes, uint64_t seed);

// Random frozen env-contact scene shared by audits and tests.
struct AuditScene
{
  ScmFrozenScene frozen;
  WorldState state;
  SystemParams params;
  Vec6 applied_wrench{Vec6::Zero()};
};
AuditScene make_audit_scene(uint64_t seed);

void write_svg_lines(const std::string& path,
                     const std::vector<std::vector<std::pair<double, double>>>& series,
                     const std::string& title);

}  // namespace scsp
