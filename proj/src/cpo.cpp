#include "scsp/cpo.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace scsp
{

void RankingParams::validate() const
{
  if (rho_bar <= 0.0 || rho_bar >= 1.0) throw std::invalid_argument("rho_bar must be in (0,1)");
  if (T1 < 1 || T2 < 1 || T3 < 1) throw std::invalid_argument("T1,T2,T3 must be >= 1");
  if (eps <= 0.0) throw std::invalid_argument("ranking eps must be > 0");
}

double compute_improvement_ratio(double l_near, const CsoResult& result, double eps)
{
  return (l_near - result.l_min) / std::max(result.l_max - result.l_min, eps);
}

PlannerState update_trigger(const PlannerState& planner, const RankingInputs& in,
                            const RankingParams& params)
{
  params.validate();
  PlannerState next = planner;

  const int kappa = params.accept_when == RankingParams::AcceptWhen::Above
                        ? (in.rho > params.rho_bar ? 1 : 0)
                        : (in.rho < params.rho_bar ? 1 : 0);
  next.last_kappa = kappa;
  next.last_rho = in.rho;
  next.t_kappa1 += kappa == 1 ? 1 : 0;
  next.t_kappa0 += kappa == 0 ? 1 : 0;
  next.t_contact = in.in_contact ? planner.t_contact + 1 : 0;

  const int t1_counter = params.t1_counts_kappa0 ? next.t_kappa0 : next.t_kappa1;
  const bool t3_ok = next.t_contact >= params.T3 ||
                     (params.waive_t3_without_contact && next.t_contact == 0);
  int gamma = planner.gamma;
  if (kappa == 0 && t1_counter >= params.T1)
  {
    gamma = 1;
  }
  else if (kappa == 1 && next.t_kappa1 >= params.T2 && t3_ok)
  {
    gamma = 0;
  }
  if (gamma != planner.gamma)
  {
    next.t_kappa1 = 0;
    next.t_kappa0 = 0;
  }
  next.gamma = gamma;

  // Reference point tracks the phase every cycle.
  if (gamma == 0)
  {
    next.p_ref = in.p_cso;
    next.p_ref_index = in.cso_index;
    next.p_ref_is_cso = true;
  }
  else
  {
    next.p_ref = in.p_near;
    next.p_ref_index = in.near_index;
    next.p_ref_is_cso = false;
  }
  return next;
}

double lift_cost(const Vec3& p_ee, const Vec3& p_o, const Vec3& p_lift, const CpoCostSpec& spec)
{
  double cost = spec.w_att * (p_ee - p_lift).squaredNorm();
  const double d2 = (p_ee - p_o).squaredNorm();
  if (d2 <= spec.sigma)
  {
    cost += -std::abs(spec.w_obs) * std::log(d2 + spec.eps_log);
  }
  return cost;
}

double place_cost(const Vec3& p_ee, const Vec3& p_o, const Vec3& p_ref, const CpoCostSpec& spec)
{
  const Vec3 target = spec.place_target == CpoCostSpec::PlaceTarget::ObjectCenter ? p_o : p_ref;
  return spec.w_con * std::log((p_ee - target).squaredNorm() + spec.eps_log) +
         spec.w_o * (p_o - p_ee).squaredNorm();
}

double lp_cost(int gamma, const Vec3& p_ee, const Vec3& p_o, const Vec3& p_lift,
               const Vec3& p_ref, const CpoCostSpec& spec)
{
  const double g = static_cast<double>(gamma);
  return (1.0 - g) * lift_cost(p_ee, p_o, p_lift, spec) +
         g * place_cost(p_ee, p_o, p_ref, spec);
}

namespace
{

struct RolloutContext
{
  const CandidateSet& candidates;
  const TriMesh& mesh;
  const SystemParams& model;
  const CpoCostSpec& costs;
  const CsoObjectiveSpec& objective;
  Pose x_current;
  int gamma;
  Vec3 p_lift;
  Vec3 p_ref;
  double w_cso_scale;
};

double rollout_cost(const RolloutContext& ctx, const WorldState& start,
                    const std::vector<Vec3>& controls)
{
  WorldState state = start;
  double total = 0.0;
  for (const Vec3& u : controls)
  {
    total += ctx.costs.w_lp * lp_cost(ctx.gamma, state.p_ee, state.x_o.p, ctx.p_lift, ctx.p_ref,
                                      ctx.costs);
    total += ctx.costs.w_u * u.squaredNorm();
    try
    {
      const auto detected = detect_contacts(state, ctx.mesh, ctx.candidates, ctx.model);
      std::vector<ContactPoint> env, rest;
      for (const auto& c : detected)
      {
        (c.pair == ContactPair::EnvObject ? env : rest).push_back(c);
      }
      auto contacts = select_support_contacts(env);
      contacts.insert(contacts.end(), rest.begin(), rest.end());
      state = step_cf(state, u, contacts, ctx.model).state;
    }
    catch (const std::exception&)
    {
      return std::numeric_limits<double>::infinity();
    }
    if (!state.x_o.p.allFinite() || !state.p_ee.allFinite())
    {
      return std::numeric_limits<double>::infinity();
    }
  }
  total += ctx.costs.w_cso * cso_objective(state.x_o, ctx.x_current, ctx.objective);
  return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
}

}  // namespace

CemOutcome cem_optimize(const SequenceCost& cost_fn, const CpoParams& params, uint64_t cycle)
{
  const int N = params.horizon;
  std::vector<Vec3> mean(static_cast<size_t>(N), Vec3::Zero());
  std::vector<Vec3> stddev(static_cast<size_t>(N), Vec3::Ones() * (0.5 * params.u_max));
  std::mt19937_64 rng(params.seed ^ (0x9E3779B97F4A7C15ull * (cycle + 1)));
  std::normal_distribution<double> gauss(0.0, 1.0);

  CemOutcome out;
  out.controls.assign(static_cast<size_t>(N), Vec3::Zero());
  out.zero_cost = cost_fn(out.controls);
  out.cost = out.zero_cost;

  std::vector<std::pair<double, int>> ranked;
  std::vector<std::vector<Vec3>> population;
  for (int iter = 0; iter < params.cem_iterations; ++iter)
  {
    population.assign(static_cast<size_t>(params.population), {});
    ranked.clear();
    for (int s = 0; s < params.population; ++s)
    {
      auto& controls = population[static_cast<size_t>(s)];
      controls.resize(static_cast<size_t>(N));
      if (s == 0)
      {
        for (auto& u : controls) u.setZero();
      }
      else if (s == 1)
      {
        controls = out.controls;
      }
      else
      {
        for (int t = 0; t < N; ++t)
        {
          for (int k = 0; k < 3; ++k)
          {
            const double v = mean[static_cast<size_t>(t)][k] +
                             stddev[static_cast<size_t>(t)][k] * gauss(rng);
            controls[static_cast<size_t>(t)][k] = std::clamp(v, -params.u_max, params.u_max);
          }
        }
      }
      const double cost = cost_fn(controls);
      ranked.emplace_back(cost, s);
      if (cost < out.cost)
      {
        out.cost = cost;
        out.controls = controls;
      }
    }
    std::sort(ranked.begin(), ranked.end());
    const int n_elites = std::min(params.elites, static_cast<int>(ranked.size()));
    if (n_elites < 1 || !std::isfinite(ranked[0].first)) break;
    for (int t = 0; t < N; ++t)
    {
      Vec3 m = Vec3::Zero();
      for (int e = 0; e < n_elites; ++e)
      {
        m += population[static_cast<size_t>(ranked[static_cast<size_t>(e)].second)]
                       [static_cast<size_t>(t)];
      }
      m /= static_cast<double>(n_elites);
      Vec3 var = Vec3::Zero();
      for (int e = 0; e < n_elites; ++e)
      {
        const Vec3 diff = population[static_cast<size_t>(ranked[static_cast<size_t>(e)].second)]
                                    [static_cast<size_t>(t)] - m;
        var += diff.cwiseProduct(diff);
      }
      mean[static_cast<size_t>(t)] = m;
      stddev[static_cast<size_t>(t)] =
          (var / static_cast<double>(n_elites)).cwiseSqrt().cwiseMax(1e-4 * params.u_max);
    }
  }
  return out;
}

CpoStepResult cpo_step(const WorldState& world, const PlannerState& planner,
                       const CandidateSet& candidates, const TriMesh& mesh,
                       const CsoResult& cso, const CsoObjectiveSpec& objective,
                       const SystemParams& model, const RankingParams& ranking,
                       const CpoCostSpec& costs, const CpoParams& params, uint64_t cycle)
{
  CpoStepResult out;

  // ===== Ranking first, so the phase and reference are current =====
  const Vec3 query_local = world.x_o.q.conjugate() * (world.p_ee - world.x_o.p);
  const int near_index = nearest_valid_index(candidates, query_local);
  const double l_near = cso.costs[static_cast<size_t>(near_index)];

  RankingInputs inputs;
  inputs.rho = compute_improvement_ratio(l_near, cso, ranking.eps);
  const auto contacts_now = detect_contacts(world, mesh, candidates, model);
  inputs.in_contact = std::any_of(contacts_now.begin(), contacts_now.end(), [](const auto& c) {
    return c.pair == ContactPair::RobotObject && c.phi < 1e-3;
  });
  inputs.p_cso = cso.p_star;
  inputs.cso_index = cso.best_index;
  inputs.p_near = world.x_o.transform(candidates.samples[static_cast<size_t>(near_index)].p);
  inputs.near_index = near_index;
  if (params.ranking_enabled)
  {
    out.planner = update_trigger(planner, inputs, ranking);
  }
  else
  {
    // w/o RS: follow the CSO output directly, always in the placing phase.
    out.planner = planner;
    out.planner.gamma = 1;
    out.planner.p_ref = cso.p_star;
    out.planner.p_ref_index = cso.best_index;
    out.planner.p_ref_is_cso = true;
    out.planner.last_rho = inputs.rho;
  }

  RolloutContext ctx{candidates, mesh,  model, costs, objective, world.x_o, out.planner.gamma,
                     cso.p_star + costs.d_lift * cso.n_star_out,
                     out.planner.p_ref, 1.0};

  const CemOutcome cem = cem_optimize(
      [&](const std::vector<Vec3>& controls) { return rollout_cost(ctx, world, controls); },
      params, cycle);

  if (!std::isfinite(cem.cost))
  {
    out.u = Vec3::Zero();
    out.error = true;
    out.rollout_cost = cem.zero_cost;
    out.zero_cost = cem.zero_cost;
  }
  else
  {
    out.u = cem.controls.front();
    out.rollout_cost = cem.cost;
    out.zero_cost = cem.zero_cost;
  }

  nlohmann::json diag;
  diag["gamma"] = out.planner.gamma;
  diag["kappa"] = out.planner.last_kappa;
  diag["rho"] = inputs.rho;
  diag["p_ref"] = {out.planner.p_ref.x(), out.planner.p_ref.y(), out.planner.p_ref.z()};
  diag["u"] = {out.u.x(), out.u.y(), out.u.z()};
  diag["rollout_cost"] = out.rollout_cost;
  diag["cso_best_cost"] = cso.l_min;
  diag["in_contact"] = inputs.in_contact;
  out.diagnostics_json = diag.dump();
  return out;
}

}  // namespace scsp
