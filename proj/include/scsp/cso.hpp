#pragma once

#include <limits>
#include <map>
#include <vector>

#include "scsp/scm.hpp"

namespace scsp
{

// Goal specification with the stable-pose objective switch: outside the
// goal stable set the cost is the planar transfer cost, inside it the
// weighted pose error.
struct CsoObjectiveSpec
{
  Pose x_goal;
  double w_pos{500.0};
  double w_quat{5.0};
  bool use_stab_switch{true};
  double stab_tol{0.02};  // membership: (R e_z).(R_goal e_z) >= 1 - tol
};

bool in_goal_stable_set(const Pose& x, const CsoObjectiveSpec& spec);

// Pose-transfer cost 1 - (R(x) e_z)'(R(goal) e_z).
double stab_cost(const Pose& x, const CsoObjectiveSpec& spec);

// w_pos ||p - p_goal||^2 + w_quat (1 - (psi' psi_goal)^2).
double pose_cost(const Pose& x, const CsoObjectiveSpec& spec);

// Switched objective; the branch is chosen by the current pose, the value
// evaluated at the predicted pose.
double cso_objective(const Pose& x_next, const Pose& x_current, const CsoObjectiveSpec& spec);

struct CsoSolverParams
{
  int max_iterations{400};
  double kkt_tol{1e-8};
  double initial_step{0.05};
};

// Exact projection onto {0 <= n <= n_max, |t1| <= mu n, |t2| <= mu n}.
Vec3 project_pyramid_box(const Vec3& lambda, double mu, double n_max);

struct CandidateEval
{
  double cost{std::numeric_limits<double>::infinity()};
  Vec3 lambda{Vec3::Zero()};
  double kkt_residual{0.0};
  int iterations{0};
  bool converged{false};
  double wall_seconds{0.0};
};

// Inner QP of the contact-selection search: optimal cone-feasible force at
// one candidate under the surrogate prediction. Projected gradient with
// exact projection; returned cost never exceeds the zero-force cost.
CandidateEval eval_candidate(const SurfaceSample& sample, const ScmFrozenScene& frozen,
                             const WorldState& state, const CsoObjectiveSpec& spec,
                             const SystemParams& sys, const CsoSolverParams& solver,
                             const Vec3& warm_start = Vec3::Zero());

struct CsoResult
{
  int best_index{-1};
  Vec3 p_star{Vec3::Zero()};        // world
  Vec3 n_star_out{Vec3::UnitZ()};   // world outward normal at the winner
  Vec3 lambda_star{Vec3::Zero()};
  std::vector<double> costs;        // per sample index; +inf for invalid/failed
  std::vector<Vec3> lambdas;
  double l_min{0.0};
  double l_max{0.0};
  int evaluated{0};
  int failed{0};
  double wall_seconds{0.0};
  double median_eval_seconds{0.0};
};

// Exhaustive outer loop over the valid candidate set; deterministic
// lowest-index tie-break.
CsoResult select_contact(const CandidateSet& candidates, const ScmFrozenScene& frozen,
                         const WorldState& state, const CsoObjectiveSpec& spec,
                         const SystemParams& sys, const CsoSolverParams& solver,
                         std::map<int, Vec3>* warm_cache = nullptr);

std::string cso_result_to_json(const CsoResult& result);

// ===== Force-closure variant =====

struct FcContact
{
  Vec3 p{Vec3::Zero()};       // world
  Vec3 n_out{Vec3::UnitZ()};  // outward surface normal
};

struct ForceClosureParams
{
  double xi{1.0};             // disturbance scaling
  double zeta{0.1};           // minimum total normal force
  double w_lambda{0.1};
  double mu{0.5};
  double lambda_max{0.2};
  int max_iterations{400};
};

struct ForceClosureResult
{
  double cost{0.0};
  std::vector<std::vector<Vec3>> forces;  // per disturbance, per contact
};

// Wrench-tracking QP over cone-feasible contact forces with a minimum
// total normal force per disturbance; throws on an infeasible grasp.
ForceClosureResult force_closure_objective(const std::vector<FcContact>& contacts,
                                           const std::vector<Vec6>& disturbances,
                                           const Vec3& object_center,
                                           const ForceClosureParams& params);

}  // namespace scsp
