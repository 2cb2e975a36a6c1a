#include "scsp/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "scsp/harness.hpp"

namespace scsp
{

Scene build_scene(const SceneConfig& config)
{
  Scene scene;
  if (config.mesh_kind == "box")
  {
    scene.mesh = make_box(config.box_extents);
  }
  else if (config.mesh_kind == "icosphere")
  {
    scene.mesh = make_icosphere(config.sphere_radius, config.sphere_subdivisions);
  }
  else if (config.mesh_kind == "obj")
  {
    scene.mesh = load_mesh(config.obj_path);
  }
  else
  {
    throw std::runtime_error("unknown mesh kind: " + config.mesh_kind);
  }

  // The object frame origin is the center of mass; gravity then exerts no
  // torque about the frame origin.
  const MassProperties mp = mass_properties(scene.mesh, config.mass);
  for (auto& v : scene.mesh.vertices) v -= mp.com;
  finalize_mesh(scene.mesh);

  FpsOptions fps;
  const auto pool_size = std::max(fps.pool_min, fps.pool_multiplier * std::max(config.n_s, 1));
  const int seed_index =
      config.fps_seed_index >= 0 ? config.fps_seed_index % pool_size : 0;
  const auto samples = farthest_point_sample(scene.mesh, config.n_s, seed_index, fps);
  scene.candidates = apply_valid_mask(samples, [](const SurfaceSample&) { return true; });

  SystemParams params;
  const double mean_inertia = mp.inertia.trace() / 3.0;
  params.M_o = Mat6::Identity();
  params.M_o.topLeftCorner<3, 3>() *= config.mass;
  params.M_o.bottomRightCorner<3, 3>() *= std::max(mean_inertia, 1e-8);
  params.object_mass = config.mass;
  params.h = config.h;
  params.n_d = config.n_d;
  params.lambda_n_max = config.lambda_n_max;
  params.fingertip_radius = config.fingertip_radius;
  params.mu_env = std::sqrt(config.mu_object * config.mu_ground);
  params.mu_r = std::sqrt(config.mu_object * config.mu_fingertip);
  params.validate();

  scene.sim_params = params;
  scene.model_params = params;
  scene.mu_object = config.mu_object;
  scene.mu_fingertip = config.mu_fingertip;
  scene.mu_ground = config.mu_ground;

  double min_z = std::numeric_limits<double>::infinity();
  for (const auto& v : scene.mesh.vertices) min_z = std::min(min_z, v.z());
  scene.object_start.p = Vec3(config.object_start_xy.x(), config.object_start_xy.y(), -min_z);
  scene.object_start.q = Quat::Identity();
  scene.fingertip_start = config.fingertip_start;
  return scene;
}

Scene randomize(const Scene& base, uint64_t seed, const RandomizeOptions& opts)
{
  Scene scene = base;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> friction(0.3, 0.7);
  scene.mu_object = friction(rng);
  scene.mu_fingertip = friction(rng);
  scene.mu_ground = friction(rng);
  scene.sim_params.mu_env = std::sqrt(scene.mu_object * scene.mu_ground);
  scene.sim_params.mu_r = std::sqrt(scene.mu_object * scene.mu_fingertip);

  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double factor;
  if (opts.literal_decade)
  {
    factor = 1.0 + 9.0 * uni(rng);
  }
  else
  {
    const double half = 0.5 * std::log(10.0);
    factor = std::exp(-half + 2.0 * half * uni(rng));
  }
  scene.sim_params.object_mass *= factor;
  scene.sim_params.M_o *= factor;
  // model_params keeps the nominal values: the planner works against a
  // deliberately mismatched world.
  return scene;
}

bool check_success(const WorldState& state, const TaskSpec& task)
{
  const double pos_error = (state.x_o.p - task.goal.p).norm();
  const double q_error = quat_error(state.x_o.q, task.goal.q);
  return pos_error <= task.pos_tol && q_error <= task.quat_tol;
}

Method method_from_string(const std::string& name)
{
  if (name == "scsp") return Method::Scsp;
  if (name == "scsp_no_rs") return Method::ScspNoRs;
  if (name == "cf_mpc") return Method::CfMpc;
  if (name == "a_mpc") return Method::AMpc;
  if (name == "i_mpc") return Method::IMpc;
  throw std::runtime_error("unknown method: " + name);
}

std::string method_name(Method m)
{
  switch (m)
  {
    case Method::Scsp: return "scsp";
    case Method::ScspNoRs: return "scsp_no_rs";
    case Method::CfMpc: return "cf_mpc";
    case Method::AMpc: return "a_mpc";
    case Method::IMpc: return "i_mpc";
  }
  return "unknown";
}

WorldState inject_disturbance(const WorldState& state, const Vec3& dp, const Vec3& rotvec)
{
  WorldState out = state;
  out.x_o.p += dp;
  out.x_o.q = quat_exp(rotvec) * state.x_o.q;
  out.x_o.q.normalize();
  out.v_o.setZero();
  out.v_ee.setZero();
  return out;
}

WorldState settle(const Scene& scene, const WorldState& start)
{
  WorldState world = start;
  for (int i = 0; i < scene.settle_steps; ++i)
  {
    const StepResult sr = step_exact(world, Vec3::Zero(), scene.mesh, scene.candidates,
                                     scene.sim_params);
    const double motion = (sr.state.x_o.p - world.x_o.p).norm();
    world = sr.state;
    if (motion < 1e-7 && sr.velocity.norm() < 1e-5) break;
  }
  world.v_o.setZero();
  world.v_ee.setZero();
  return world;
}

namespace
{

// Fixed-contact-location MPC baselines: proximity + control stage cost,
// pose terminal cost, optional alignment prior, rolled out through the
// fast model (or the exact QP model for the implicit variant).
Vec3 baseline_plan(const WorldState& world, const Scene& scene, const PlannerConfig& cfg,
                   const TaskSpec& task, Method method, uint64_t cycle)
{
  const SystemParams& model = scene.model_params;
  CsoObjectiveSpec objective = cfg.objective;
  objective.x_goal = task.goal;

  auto rollout = [&](const std::vector<Vec3>& controls) {
    WorldState state = world;
    double total = 0.0;
    for (const Vec3& u : controls)
    {
      total += cfg.bl_w_contact * (state.x_o.p - state.p_ee).squaredNorm();
      total += cfg.bl_w_u * u.squaredNorm();
      if (method == Method::AMpc)
      {
        total += cfg.bl_w_align * baseline_a_mpc_cost(state.p_ee, state.x_o.p, task.goal.p);
      }
      try
      {
        const auto detected = detect_contacts(state, scene.mesh, scene.candidates, model);
        std::vector<ContactPoint> env, rest;
        for (const auto& c : detected)
        {
          (c.pair == ContactPair::EnvObject ? env : rest).push_back(c);
        }
        auto contacts = select_support_contacts(env);
        contacts.insert(contacts.end(), rest.begin(), rest.end());
        if (method == Method::IMpc)
        {
          state = step_exact_on(state, u, contacts, model).state;
        }
        else
        {
          state = step_cf(state, u, contacts, model).state;
        }
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
    total += pose_cost(state.x_o, objective);
    return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
  };

  const CemOutcome cem = cem_optimize(rollout, cfg.cpo, cycle);
  return std::isfinite(cem.cost) ? cem.controls.front() : Vec3::Zero();
}

}  // namespace

TrialRecord run_trial(const Scene& scene, const TaskSpec& task, const PlannerConfig& planner,
                      uint64_t seed, const std::vector<DisturbanceSpec>& disturbances)
{
  const auto wall_begin = std::chrono::steady_clock::now();
  TrialRecord record;

  CsoObjectiveSpec objective = planner.objective;
  objective.x_goal = task.goal;
  CpoParams cpo = planner.cpo;
  cpo.seed = seed ^ planner.seed;
  cpo.ranking_enabled = planner.method != Method::ScspNoRs;

  WorldState world;
  world.x_o = scene.object_start;
  world.p_ee = scene.fingertip_start;
  world = settle(scene, world);

  PlannerState ps;
  ps.gamma = 0;
  std::map<int, Vec3> warm_cache;
  CsoResult cso;
  bool have_cso = false;
  int previous_gamma = ps.gamma;
  double plan_seconds = 0.0;
  double cso_seconds = 0.0;
  int plan_cycles = 0;

  const bool uses_cso = planner.method == Method::Scsp || planner.method == Method::ScspNoRs;

  // Valid-region selection against the ground, refreshed with the pose.
  CandidateSet masked = scene.candidates;
  auto refresh_mask = [&](const WorldState& at) {
    try
    {
      masked = apply_valid_mask(scene.candidates.samples, [&](const SurfaceSample& s) {
        return at.x_o.transform(s.p).z() >= planner.ground_mask_z;
      });
    }
    catch (const std::exception&)
    {
      masked = scene.candidates;  // degenerate pose: keep everything
    }
  };

  int step = 0;
  for (; step < task.max_steps; ++step)
  {
    if (check_success(world, task))
    {
      record.success = true;
      break;
    }

    for (const auto& d : disturbances)
    {
      if (d.at_step == step)
      {
        world = inject_disturbance(world, d.dp, d.rotvec);
        if (min_signed_distance(world, scene.mesh, scene.candidates, scene.sim_params) <
            -scene.sim_params.contact_margin)
        {
          world = step_exact(world, Vec3::Zero(), scene.mesh, scene.candidates,
                             scene.sim_params).state;
        }
      }
    }

    // ===== Plan =====
    const auto plan_begin = std::chrono::steady_clock::now();
    Vec3 u = Vec3::Zero();
    double rho = 0.0;
    bool cpo_error = false;
    if (uses_cso)
    {
      if (!have_cso || (step % std::max(planner.cso_refresh, 1)) == 0)
      {
        refresh_mask(world);
        const auto model_contacts =
            detect_contacts(world, scene.mesh, scene.candidates, scene.model_params);
        std::vector<ContactPoint> env;
        for (const auto& c : model_contacts)
        {
          if (c.pair == ContactPair::EnvObject) env.push_back(c);
        }
        const ScmFrozenScene frozen =
            freeze_scene(world, select_support_contacts(env), scene.model_params);
        const auto cso_begin = std::chrono::steady_clock::now();
        cso = select_contact(masked, frozen, world, objective, scene.model_params,
                             planner.cso_solver, &warm_cache);
        cso_seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - cso_begin).count();
        have_cso = true;
      }
      const CpoStepResult r = cpo_step(world, ps, masked, scene.mesh, cso, objective,
                                       scene.model_params, planner.ranking, planner.costs, cpo,
                                       static_cast<uint64_t>(step));
      ps = r.planner;
      u = r.u;
      rho = ps.last_rho;
      cpo_error = r.error;
      if (ps.gamma != previous_gamma)
      {
        ++record.gamma_transitions;
        previous_gamma = ps.gamma;
      }
    }
    else
    {
      CpoParams bl = cpo;
      bl.seed = seed ^ planner.seed;
      PlannerConfig cfg = planner;
      cfg.cpo = bl;
      u = baseline_plan(world, scene, cfg, task, planner.method, static_cast<uint64_t>(step));
    }
    plan_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - plan_begin).count();
    ++plan_cycles;

    // ===== Step the ground-truth physics =====
    const double sd_before =
        min_signed_distance(world, scene.mesh, scene.candidates, scene.sim_params);
    StepResult sr;
    try
    {
      sr = step_exact(world, u, scene.mesh, scene.candidates, scene.sim_params);
    }
    catch (const std::exception& e)
    {
      record.hard_error = true;
      record.error_message = e.what();
      break;
    }
    const double kkt_violation =
        std::max({-sr.kkt.min_slack, sr.kkt.max_complementarity, -sr.kkt.min_impulse});
    record.max_kkt_violation = std::max(record.max_kkt_violation, kkt_violation);
    const double sd_after =
        min_signed_distance(sr.state, scene.mesh, scene.candidates, scene.sim_params);
    const double drift = std::max(0.0, -sd_after) - std::max(0.0, -sd_before);
    record.worst_penetration_drift = std::max(record.worst_penetration_drift, drift);

    if ((sr.state.x_o.p - world.x_o.p).norm() > scene.tunneling_cap)
    {
      record.hard_error = true;
      record.error_message = "tunneling: per-step object displacement above cap";
      break;
    }
    world = sr.state;

    if (planner.save_trace)
    {
      TraceRow row;
      row.step = step;
      row.x_o = world.x_o;
      row.p_ee = world.p_ee;
      row.u = u;
      row.gamma = ps.gamma;
      row.rho = rho;
      row.p_ref = ps.p_ref;
      row.pos_error = (world.x_o.p - task.goal.p).norm();
      row.quat_error = quat_error(world.x_o.q, task.goal.q);
      row.in_contact = uses_cso && ps.t_contact > 0;
      record.trace.push_back(row);
      (void)cpo_error;
    }
  }

  record.steps = step;
  record.exec_time_s = step * scene.sim_params.h;
  record.final_pos_error = (world.x_o.p - task.goal.p).norm();
  record.final_quat_error = quat_error(world.x_o.q, task.goal.q);
  if (!record.success && !record.hard_error)
  {
    record.success = check_success(world, task);
  }
  record.mean_plan_seconds = plan_cycles > 0 ? plan_seconds / plan_cycles : 0.0;
  record.mean_cso_seconds = plan_cycles > 0 ? cso_seconds / plan_cycles : 0.0;
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_begin).count();
  return record;
}

std::string trace_to_jsonl(const TrialRecord& record)
{
  std::ostringstream out;
  for (const auto& row : record.trace)
  {
    nlohmann::json j;
    j["step"] = row.step;
    j["p"] = {row.x_o.p.x(), row.x_o.p.y(), row.x_o.p.z()};
    j["q"] = {row.x_o.q.w(), row.x_o.q.x(), row.x_o.q.y(), row.x_o.q.z()};
    j["p_ee"] = {row.p_ee.x(), row.p_ee.y(), row.p_ee.z()};
    j["u"] = {row.u.x(), row.u.y(), row.u.z()};
    j["gamma"] = row.gamma;
    j["rho"] = row.rho;
    j["p_ref"] = {row.p_ref.x(), row.p_ref.y(), row.p_ref.z()};
    j["pos_error"] = row.pos_error;
    j["quat_error"] = row.quat_error;
    out << j.dump() << "\n";
  }
  return out.str();
}

}  // namespace scsp
