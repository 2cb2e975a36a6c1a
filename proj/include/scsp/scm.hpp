#pragma once

#include <vector>

#include "scsp/dynamics.hpp"

namespace scsp
{

// Wrench map of a point contact on the object: rows are the contact frame
// directions (push normal, two tangents), columns the object twist.
using WrenchMap = Eigen::Matrix<double, 3, 6>;

// Environment-contact scene frozen at rollout start: the contact set,
// Jacobians, and per-block diagonal surrogates stay fixed for the
// lifetime of the object (fixed-contact-set assumption), and the gaps are
// treated as zero.
struct ScmFrozenScene
{
  int n_env{0};
  int rows_per_contact{0};
  std::vector<MatX> J_env;     // per contact: rows_per_contact x 6 pyramid rows
  std::vector<VecX> D;         // diag(W_ii) + eps_reg entries
  std::vector<MatX> W_blocks;  // audit: full per-contact blocks
  MatX W_full;                 // audit: full Delassus incl. coupling
  double coupling_norm{0.0};   // audit: ||W_full - blockdiag(W_ii)||_2
  double eps_reg{0.0};
  Mat6 Minv{Mat6::Zero()};     // (eps * M_o)^-1
  Vec6 tau_o{Vec6::Zero()};
  double h{0.02};
};

ScmFrozenScene freeze_scene(const WorldState& state, const std::vector<ContactPoint>& env_contacts,
                            const SystemParams& params);

// Manifold-style reduction of a dense env-contact set to the extreme
// corners of the contact patch (at most max_points, deterministic). The
// decoupled blocks treat each frozen contact as a full support, so the
// planner freezes a compact set rather than every touching sample.
std::vector<ContactPoint> select_support_contacts(const std::vector<ContactPoint>& env_contacts,
                                                  int max_points = 4);

// Clamped per-block environment response to the total applied wrench
// w_r = sum_j J_r_j' lambda_r_j. Output is in force units; the predicted
// velocity uses the h-scaled impulses.
std::vector<VecX> env_force(const ScmFrozenScene& frozen, const Vec6& applied_wrench);

// Object velocity response, consistent with the exact model as the block
// surrogate approaches the full Delassus matrix.
Vec6 scm_velocity(const ScmFrozenScene& frozen, const Vec6& applied_wrench);

struct ScmPrediction
{
  Vec6 v_plus{Vec6::Zero()};
  Pose x_next;
};

ScmPrediction scm_predict(const ScmFrozenScene& frozen, const WorldState& state,
                          const Vec6& applied_wrench);

// Contact frame of `sample` carried into the world by `pose`, with the
// normal negated so positive normal force pushes into the object.
WrenchMap robot_wrench_map(const SurfaceSample& sample, const Pose& pose);
WrenchMap robot_wrench_map_at(const Vec3& p_world, const Vec3& push_normal, const Vec3& t1,
                              const Vec3& t2, const Vec3& object_center);

struct ScmGradient
{
  Eigen::Matrix<double, 6, 3> dv_dlambda;  // velocity sensitivity
  Eigen::Matrix<double, 7, 3> dx_dlambda;  // rows: position, quaternion (w,x,y,z)
};

// Piecewise-constant Jacobian of the one-step prediction with respect to
// the robot force at one contact; clamp boundaries use the inactive branch.
ScmGradient scm_gradient(const ScmFrozenScene& frozen, const WorldState& state,
                         const WrenchMap& J_r, const Vec3& lambda_r);

// Active pattern of the clamps (true = positive branch), used by the
// piecewise-linearity audits.
std::vector<std::vector<bool>> clamp_pattern(const ScmFrozenScene& frozen,
                                             const Vec6& applied_wrench);

}  // namespace scsp
