#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scsp/cpo.hpp"

namespace scsp
{

// Desk-scale world: one object on the ground plane, one spherical
// fingertip. sim_params is ground truth; model_params is the planner's
// (deliberately rougher) view.
struct Scene
{
  TriMesh mesh;
  CandidateSet candidates;
  SystemParams sim_params;
  SystemParams model_params;
  Pose object_start;
  Vec3 fingertip_start{Vec3::Zero()};
  double mu_object{0.5}, mu_fingertip{0.5}, mu_ground{0.5};  // raw triple
  int settle_steps{100};
  double tunneling_cap{0.05};  // per-step object displacement bound (m)
};

struct SceneConfig
{
  std::string mesh_kind{"box"};  // "box" | "icosphere" | "obj"
  Vec3 box_extents{0.08, 0.08, 0.08};
  double sphere_radius{0.05};
  int sphere_subdivisions{2};
  std::string obj_path;
  double mass{0.1};
  double mu_object{0.5}, mu_fingertip{0.5}, mu_ground{0.5};
  int n_s{70};
  int fps_seed_index{0};
  double fingertip_radius{0.012};
  double h{0.02};
  int n_d{4};
  double lambda_n_max{0.2};
  Vec3 object_start_xy{0.0, 0.0, 0.0};  // z ignored; object rests on the ground
  Vec3 fingertip_start{-0.09, 0.0, 0.03};
};

Scene build_scene(const SceneConfig& config);

struct RandomizeOptions
{
  bool literal_decade{false};  // mass factor ~ U[1,10] instead of [1/sqrt10, sqrt10]
};

// Friction triple ~ U(0.3, 0.7), mass scaled within a factor of ten;
// model_params stays at its nominal values.
Scene randomize(const Scene& base, uint64_t seed, const RandomizeOptions& opts = {});

struct TaskSpec
{
  enum class Kind
  {
    Rotation,
    Flipping
  };
  Kind kind{Kind::Rotation};
  Pose goal;
  double pos_tol{0.02};
  double quat_tol{0.05};
  int max_steps{2500};
};

bool check_success(const WorldState& state, const TaskSpec& task);

enum class Method
{
  Scsp,
  ScspNoRs,
  CfMpc,
  AMpc,
  IMpc
};

Method method_from_string(const std::string& name);
std::string method_name(Method m);

struct PlannerConfig
{
  Method method{Method::Scsp};
  CsoObjectiveSpec objective;
  CsoSolverParams cso_solver;
  RankingParams ranking;
  CpoCostSpec costs;
  CpoParams cpo;
  int cso_refresh{1};
  // Valid-region selection: candidates whose world height falls below
  // this are masked out each refresh (unreachable next to the ground).
  double ground_mask_z{0.015};
  uint64_t seed{0};
  // Baseline stage-cost weights (contact proximity / control / alignment).
  double bl_w_contact{30.0};
  double bl_w_u{50.0};
  double bl_w_align{5.0};
  bool save_trace{true};
};

struct TraceRow
{
  int step{0};
  Pose x_o;
  Vec3 p_ee{Vec3::Zero()};
  Vec3 u{Vec3::Zero()};
  int gamma{0};
  double rho{0.0};
  Vec3 p_ref{Vec3::Zero()};
  double pos_error{0.0};
  double quat_error{0.0};
  bool in_contact{false};
};

struct TrialRecord
{
  bool success{false};
  bool hard_error{false};
  std::string error_message;
  int steps{0};
  double exec_time_s{0.0};       // simulated seconds, steps * h
  double wall_seconds{0.0};
  double final_pos_error{0.0};
  double final_quat_error{0.0};
  double mean_plan_seconds{0.0};  // per planner cycle, CSO + CPO
  double mean_cso_seconds{0.0};
  double max_kkt_violation{0.0};  // worst complementarity residual seen
  double worst_penetration_drift{0.0};
  int gamma_transitions{0};
  std::vector<TraceRow> trace;
};

struct DisturbanceSpec
{
  int at_step{0};
  Vec3 dp{Vec3::Zero()};
  Vec3 rotvec{Vec3::Zero()};
};

WorldState inject_disturbance(const WorldState& state, const Vec3& dp, const Vec3& rotvec);

// Zero-control settling until the object stops moving (bounded step count).
WorldState settle(const Scene& scene, const WorldState& start);

TrialRecord run_trial(const Scene& scene, const TaskSpec& task, const PlannerConfig& planner,
                      uint64_t seed,
                      const std::vector<DisturbanceSpec>& disturbances = {});

std::string trace_to_jsonl(const TrialRecord& record);

}  // namespace scsp
