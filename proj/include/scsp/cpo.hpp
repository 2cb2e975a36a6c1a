#pragma once

#include <optional>
#include <string>

#include "scsp/cso.hpp"

namespace scsp
{

// Hysteresis constants of the contact-location ranking strategy.
struct RankingParams
{
  double rho_bar{0.75};
  int T1{5};
  int T2{10};
  int T3{15};
  double eps{0.01};

  // The trigger formula kappa = 1(rho > rho_bar) conflicts with the prose
  // meaning "kappa = 1 when the near point is acceptable"; both readings
  // are supported and unit-tested.
  enum class AcceptWhen
  {
    Above,  // kappa = 1(rho > rho_bar), literal formula
    Below   // kappa = 1(rho < rho_bar), prose semantics
  };
  AcceptWhen accept_when{AcceptWhen::Below};

  // Literal text gates the switch to placing on t_{kappa=1}; the intuitive
  // variant gates it on t_{kappa=0}.
  bool t1_counts_kappa0{false};

  // The re-lift row requires t_contact >= T3, which deadlocks a planner
  // hovering without contact (the counter never advances). When set, the
  // T3 gate is waived while no contact exists to protect.
  bool waive_t3_without_contact{false};

  void validate() const;
};

// Phase flag, reference contact point, and the trigger counters. gamma = 0
// is the lifting phase (track the CSO optimum), gamma = 1 the placing
// phase (track the nearest point).
struct PlannerState
{
  int gamma{0};
  Vec3 p_ref{Vec3::Zero()};
  int p_ref_index{-1};
  bool p_ref_is_cso{true};
  int t_kappa1{0};
  int t_kappa0{0};
  int t_contact{0};
  int last_kappa{0};
  double last_rho{0.0};
};

// rho = (l_near - l_min) / max(l_max - l_min, eps).
double compute_improvement_ratio(double l_near, const CsoResult& result, double eps);

struct RankingInputs
{
  double rho{0.0};
  bool in_contact{false};
  Vec3 p_cso{Vec3::Zero()};
  int cso_index{-1};
  Vec3 p_near{Vec3::Zero()};
  int near_index{-1};
};

// One tick of the sliding-window trigger; counters reset when the phase
// switches, which bounds switching frequency from below by min(T1, T2).
PlannerState update_trigger(const PlannerState& planner, const RankingInputs& in,
                            const RankingParams& params);

// Stage-cost weights of the lift/place potential fields. The repulsive
// log barrier enters with a negative sign so proximity is penalized; sigma
// thresholds the squared distance.
struct CpoCostSpec
{
  double w_lp{1.0};
  double w_u{50.0};
  double w_cso{10.0};
  double w_att{400.0};
  double w_obs{0.02};
  double w_con{0.02};
  double w_o{100.0};
  double sigma{0.02};     // squared-distance threshold (m^2)
  double d_lift{0.05};    // lift offset along the contact normal (m)
  double eps_log{1e-4};
  enum class PlaceTarget
  {
    ObjectCenter,  // paper display
    RefPoint       // prose variant
  };
  PlaceTarget place_target{PlaceTarget::ObjectCenter};
};

double lift_cost(const Vec3& p_ee, const Vec3& p_o, const Vec3& p_lift, const CpoCostSpec& spec);
double place_cost(const Vec3& p_ee, const Vec3& p_o, const Vec3& p_ref, const CpoCostSpec& spec);
double lp_cost(int gamma, const Vec3& p_ee, const Vec3& p_o, const Vec3& p_lift,
               const Vec3& p_ref, const CpoCostSpec& spec);

// Shooting-MPC knobs (sampling solver).
struct CpoParams
{
  int horizon{5};
  double u_max{0.01};      // per-axis displacement bound per step (m)
  int population{48};
  int elites{8};
  int cem_iterations{2};
  uint64_t seed{0};
  bool ranking_enabled{true};  // false: follow the CSO point directly (w/o RS)
};

// Seeded cross-entropy search over a length-N control sequence. The zero
// sequence is always in the population, so the winner never costs more
// than doing nothing.
using SequenceCost = std::function<double(const std::vector<Vec3>&)>;

struct CemOutcome
{
  std::vector<Vec3> controls;
  double cost{0.0};
  double zero_cost{0.0};
};

CemOutcome cem_optimize(const SequenceCost& cost_fn, const CpoParams& params, uint64_t cycle);

struct CpoStepResult
{
  Vec3 u{Vec3::Zero()};
  double rollout_cost{0.0};
  double zero_cost{0.0};
  bool error{false};
  PlannerState planner;
  std::string diagnostics_json;
};

// One planner cycle: ranking update, then a seeded cross-entropy search
// over the control sequence rolled out through the fast contact model.
// Identical inputs (including cycle index) give identical output.
CpoStepResult cpo_step(const WorldState& world, const PlannerState& planner,
                       const CandidateSet& candidates, const TriMesh& mesh,
                       const CsoResult& cso, const CsoObjectiveSpec& objective,
                       const SystemParams& model, const RankingParams& ranking,
                       const CpoCostSpec& costs, const CpoParams& params, uint64_t cycle);

}  // namespace scsp
