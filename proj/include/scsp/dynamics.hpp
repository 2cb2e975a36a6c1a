#pragma once

#include <vector>

#include "scsp/math.hpp"
#include "scsp/mesh.hpp"
#include "scsp/params.hpp"
#include "scsp/qp.hpp"
#include "scsp/sampling.hpp"

namespace scsp
{

// Generalized velocity layout: [object linear (3); object angular (3);
// fingertip linear (3)], all world frame.
inline constexpr int kNumVel = 9;
using VecV = Eigen::Matrix<double, kNumVel, 1>;
using MatV = Eigen::Matrix<double, kNumVel, kNumVel>;
using RowV = Eigen::Matrix<double, 1, kNumVel>;

struct WorldState
{
  Pose x_o;
  Vec3 p_ee{Vec3::Zero()};
  Vec6 v_o{Vec6::Zero()};
  Vec3 v_ee{Vec3::Zero()};
};

enum class ContactPair
{
  EnvObject,
  RobotObject,
  EnvRobot  // fingertip sphere against the ground plane
};

// World-frame contact point. For environment contacts the normal is the
// ground +z; for robot contacts it points from the fingertip into the
// object (the direction the robot can push).
struct ContactPoint
{
  Vec3 p{Vec3::Zero()};
  Vec3 n{Vec3::UnitZ()};
  Vec3 t1{Vec3::UnitX()};
  Vec3 t2{Vec3::UnitY()};
  double phi{0.0};
  ContactPair pair{ContactPair::EnvObject};
  int source_id{-1};  // env: candidate sample index; robot: face index
};

struct ContactRows
{
  RowV jn, jt1, jt2;
};

// Velocity rows mapping [v_o; v_ee] to contact-frame relative velocity
// (positive normal rate = separating).
ContactRows contact_rows(const ContactPoint& c, const Vec3& object_center);

struct AssembledSystem
{
  MatV Q{MatV::Zero()};
  MatV Qinv{MatV::Zero()};
  VecV b{VecV::Zero()};
  MatX Jt;    // stacked pyramid rows, n_d per contact
  VecX phit;  // phi repeated n_d times per contact
  std::vector<ContactPoint> contacts;
  int rows_per_contact{0};
};

// Environment contacts come from the candidate samples carried into the
// world frame; the robot contact is the deepest sphere-vs-mesh proximity.
std::vector<ContactPoint> detect_contacts(const WorldState& state, const TriMesh& mesh,
                                          const CandidateSet& candidates,
                                          const SystemParams& params);

AssembledSystem assemble_system(const WorldState& state, const std::vector<ContactPoint>& contacts,
                                const Vec3& u, const SystemParams& params);

struct KktReport
{
  double min_slack{0.0};        // primal feasibility, >= -1e-8 expected
  double max_complementarity{0.0};
  double min_impulse{0.0};      // dual feasibility
  int iterations{0};
  bool solver_ok{true};
};

struct StepResult
{
  WorldState state;
  VecX impulses;  // facet impulses beta, n_d per contact
  KktReport kkt;
  VecV velocity{VecV::Zero()};
};

// One step of the primal contact QP solved exactly through its dual,
// integrated with the quaternion exponential map.
StepResult step_exact(const WorldState& state, const Vec3& u, const TriMesh& mesh,
                      const CandidateSet& candidates, const SystemParams& params,
                      const VecX& warm_start = VecX());

// Same solve on caller-provided contacts (synthetic scenes, tests).
StepResult step_exact_on(const WorldState& state, const Vec3& u,
                         const std::vector<ContactPoint>& contacts, const SystemParams& params,
                         const VecX& warm_start = VecX());

struct CfStepResult
{
  WorldState state;
  VecX impulses;
  VecV velocity_change{VecV::Zero()};
};

// Complementarity-free step: clamped closed-form impulses through the
// entrywise-inverted diagonal of the regularized Delassus matrix.
CfStepResult step_cf(const WorldState& state, const Vec3& u,
                     const std::vector<ContactPoint>& contacts, const SystemParams& params);

// Normal impulse of contact i (sum of its facet impulses).
double normal_impulse(const AssembledSystem& sys, const VecX& beta, int contact_index);

// Smallest signed distance over candidate env points and the fingertip
// proximity; used by non-penetration audits.
double min_signed_distance(const WorldState& state, const TriMesh& mesh,
                           const CandidateSet& candidates, const SystemParams& params);

}  // namespace scsp
