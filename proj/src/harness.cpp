#include "scsp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace scsp
{

double baseline_a_mpc_cost(const Vec3& p_ee, const Vec3& p_obj, const Vec3& p_goal)
{
  const Vec3 to_goal = p_goal - p_obj;
  const Vec3 to_obj = p_obj - p_ee;
  if (to_goal.norm() < 1e-9 || to_obj.norm() < 1e-9) return 0.0;
  return -(to_goal.normalized().dot(to_obj.normalized()) + 1.0) / 2.0;
}

PlannerConfig benchmark_planner_defaults()
{
  PlannerConfig planner;
  planner.ranking.accept_when = RankingParams::AcceptWhen::Above;
  planner.ranking.t1_counts_kappa0 = true;
  planner.ranking.waive_t3_without_contact = true;
  planner.costs.place_target = CpoCostSpec::PlaceTarget::RefPoint;
  planner.ranking.rho_bar = 0.35;
  planner.costs.w_con = 1.0;
  planner.costs.w_obs = 2.0;
  planner.costs.w_o = 50.0;
  planner.cso_refresh = 3;
  planner.cpo.population = 64;
  planner.cpo.u_max = 0.008;
  return planner;
}

// ===== Config =====

namespace
{

Vec3 json_vec3(const nlohmann::json& j, const Vec3& fallback)
{
  if (!j.is_array() || j.size() != 3) return fallback;
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  try
  {
    in >> j;
  }
  catch (const std::exception& e)
  {
    throw std::runtime_error("config parse error: " + std::string(e.what()));
  }

  ExperimentConfig cfg;
  if (j.contains("scene"))
  {
    const auto& s = j["scene"];
    cfg.scene.mesh_kind = s.value("mesh_kind", cfg.scene.mesh_kind);
    cfg.scene.box_extents = json_vec3(s.value("box_extents", nlohmann::json()), cfg.scene.box_extents);
    cfg.scene.sphere_radius = s.value("sphere_radius", cfg.scene.sphere_radius);
    cfg.scene.sphere_subdivisions = s.value("sphere_subdivisions", cfg.scene.sphere_subdivisions);
    cfg.scene.obj_path = s.value("obj_path", cfg.scene.obj_path);
    cfg.scene.mass = s.value("mass", cfg.scene.mass);
    cfg.scene.mu_object = s.value("mu_object", cfg.scene.mu_object);
    cfg.scene.mu_fingertip = s.value("mu_fingertip", cfg.scene.mu_fingertip);
    cfg.scene.mu_ground = s.value("mu_ground", cfg.scene.mu_ground);
    cfg.scene.n_s = s.value("n_s", cfg.scene.n_s);
    cfg.scene.fingertip_radius = s.value("fingertip_radius", cfg.scene.fingertip_radius);
    cfg.scene.h = s.value("h", cfg.scene.h);
    cfg.scene.n_d = s.value("n_d", cfg.scene.n_d);
    cfg.scene.lambda_n_max = s.value("lambda_n_max", cfg.scene.lambda_n_max);
    cfg.scene.fingertip_start = json_vec3(s.value("fingertip_start", nlohmann::json()),
                                          cfg.scene.fingertip_start);
  }
  if (j.contains("planner"))
  {
    const auto& p = j["planner"];
    cfg.planner.cso_refresh = p.value("cso_refresh", cfg.planner.cso_refresh);
    cfg.planner.objective.w_pos = p.value("w_pos", cfg.planner.objective.w_pos);
    cfg.planner.objective.w_quat = p.value("w_quat", cfg.planner.objective.w_quat);
    cfg.planner.objective.use_stab_switch =
        p.value("use_stab_switch", cfg.planner.objective.use_stab_switch);
    cfg.planner.ranking.rho_bar = p.value("rho_bar", cfg.planner.ranking.rho_bar);
    cfg.planner.ranking.T1 = p.value("T1", cfg.planner.ranking.T1);
    cfg.planner.ranking.T2 = p.value("T2", cfg.planner.ranking.T2);
    cfg.planner.ranking.T3 = p.value("T3", cfg.planner.ranking.T3);
    cfg.planner.ranking.eps = p.value("ranking_eps", cfg.planner.ranking.eps);
    const std::string accept = p.value("accept_when", std::string("above"));
    cfg.planner.ranking.accept_when = accept == "below" ? RankingParams::AcceptWhen::Below
                                                        : RankingParams::AcceptWhen::Above;
    cfg.planner.ranking.t1_counts_kappa0 = p.value("t1_counts_kappa0", true);
    cfg.planner.costs.w_lp = p.value("w_lp", cfg.planner.costs.w_lp);
    cfg.planner.costs.w_u = p.value("w_u", cfg.planner.costs.w_u);
    cfg.planner.costs.w_cso = p.value("w_cso", cfg.planner.costs.w_cso);
    cfg.planner.costs.w_att = p.value("w_att", cfg.planner.costs.w_att);
    cfg.planner.costs.w_obs = p.value("w_obs", cfg.planner.costs.w_obs);
    cfg.planner.costs.w_con = p.value("w_con", cfg.planner.costs.w_con);
    cfg.planner.costs.w_o = p.value("w_o", cfg.planner.costs.w_o);
    cfg.planner.costs.sigma = p.value("sigma", cfg.planner.costs.sigma);
    cfg.planner.costs.d_lift = p.value("d_lift", cfg.planner.costs.d_lift);
    cfg.planner.cpo.horizon = p.value("horizon", cfg.planner.cpo.horizon);
    cfg.planner.cpo.u_max = p.value("u_max", cfg.planner.cpo.u_max);
    cfg.planner.cpo.population = p.value("population", cfg.planner.cpo.population);
    cfg.planner.cpo.elites = p.value("elites", cfg.planner.cpo.elites);
    cfg.planner.cpo.cem_iterations = p.value("cem_iterations", cfg.planner.cpo.cem_iterations);
    cfg.planner.bl_w_contact = p.value("bl_w_contact", cfg.planner.bl_w_contact);
    cfg.planner.bl_w_u = p.value("bl_w_u", cfg.planner.bl_w_u);
    cfg.planner.bl_w_align = p.value("bl_w_align", cfg.planner.bl_w_align);
  }
  cfg.task_kind = j.value("task_kind", cfg.task_kind);
  cfg.method = j.value("method", cfg.method);
  cfg.battery = j.value("battery", cfg.battery);
  cfg.trials = j.value("trials", cfg.trials);
  cfg.seed_base = j.value("seed_base", cfg.seed_base);
  cfg.max_steps = j.value("max_steps", cfg.max_steps);
  cfg.goal_distance = j.value("goal_distance", cfg.goal_distance);
  cfg.goal_yaw_range = j.value("goal_yaw_range", cfg.goal_yaw_range);
  if (j.contains("ns_sweep")) cfg.ns_sweep = j["ns_sweep"].get<std::vector<int>>();
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.save_trajectories = j.value("save_trajectories", cfg.save_trajectories);
  cfg.randomize_scenes = j.value("randomize_scenes", cfg.randomize_scenes);
  if (j.contains("disturbances"))
  {
    for (const auto& d : j["disturbances"])
    {
      DisturbanceSpec spec;
      spec.at_step = d.value("at_step", 0);
      spec.dp = json_vec3(d.value("dp", nlohmann::json()), Vec3::Zero());
      spec.rotvec = json_vec3(d.value("rotvec", nlohmann::json()), Vec3::Zero());
      cfg.disturbances.push_back(spec);
    }
  }
  return cfg;
}

// ===== Trial construction =====

TrialSetup make_trial(const ExperimentConfig& config, Method method, int trial_index)
{
  TrialSetup setup;
  const uint64_t seed = config.seed_base + static_cast<uint64_t>(trial_index);
  setup.seed = seed;

  SceneConfig scene_config = config.scene;
  if (config.randomize_scenes)
  {
    scene_config.fps_seed_index = static_cast<int>((seed * 131 + 7) % 1997);
  }
  Scene scene = build_scene(scene_config);
  if (config.randomize_scenes) scene = randomize(scene, seed * 977 + 13);

  std::mt19937_64 rng(seed * 6364136223846793005ull + 17);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  // Goal: planar offset plus yaw for rotation; a quarter-turn about a
  // horizontal axis for flipping.
  TaskSpec task;
  task.max_steps = config.max_steps;
  const double heading = 2.0 * M_PI * uni(rng);
  const Vec3 dir(std::cos(heading), std::sin(heading), 0.0);
  task.goal.p = scene.object_start.p + config.goal_distance * dir;
  if (config.task_kind == "flipping")
  {
    task.kind = TaskSpec::Kind::Flipping;
    const Vec3 axis = Vec3(-dir.y(), dir.x(), 0.0);
    task.goal.q = quat_exp(0.5 * M_PI * axis) * scene.object_start.q;
    // Flipped box rests at the same height only for equal extents; recompute.
    double min_z = std::numeric_limits<double>::infinity();
    for (const auto& v : scene.mesh.vertices)
    {
      min_z = std::min(min_z, (task.goal.q * v).z());
    }
    task.goal.p.z() = -min_z;
  }
  else
  {
    task.kind = TaskSpec::Kind::Rotation;
    const double yaw = config.goal_yaw_range * (2.0 * uni(rng) - 1.0);
    task.goal.q = quat_exp(Vec3(0.0, 0.0, yaw)) * scene.object_start.q;
    task.goal.p.z() = scene.object_start.p.z();
  }

  // Fingertip placement: the adversarial battery starts on the goal side,
  // where proximity-driven planners push the object the wrong way.
  const double ring = 0.10;
  const double height = 0.03;
  Vec3 ee;
  if (config.battery == "adversarial")
  {
    ee = scene.object_start.p + ring * dir;
  }
  else
  {
    const double angle = 2.0 * M_PI * uni(rng);
    ee = scene.object_start.p + ring * Vec3(std::cos(angle), std::sin(angle), 0.0);
  }
  ee.z() = height;
  scene.fingertip_start = ee;

  setup.planner = config.planner;
  setup.planner.method = method;
  setup.planner.seed = seed;
  setup.planner.save_trace = config.save_trajectories;
  setup.scene = std::move(scene);
  setup.task = task;
  return setup;
}

// ===== Aggregation =====

MethodReport summarize(const std::string& name, const std::vector<TrialRecord>& records)
{
  MethodReport report;
  report.method = name;
  report.trials = static_cast<int>(records.size());
  double exec = 0.0, pos = 0.0, quat = 0.0, plan = 0.0, cso = 0.0, wall = 0.0;
  for (const auto& r : records)
  {
    report.successes += r.success ? 1 : 0;
    report.hard_errors += r.hard_error ? 1 : 0;
    report.gamma_transitions += r.gamma_transitions;
    report.max_kkt_violation = std::max(report.max_kkt_violation, r.max_kkt_violation);
    plan += r.mean_plan_seconds;
    cso += r.mean_cso_seconds;
    wall += r.wall_seconds;
    if (r.success)
    {
      exec += r.exec_time_s;
      pos += r.final_pos_error;
      quat += r.final_quat_error;
    }
  }
  const int n = report.trials;
  report.success_rate = n > 0 ? static_cast<double>(report.successes) / n : 0.0;
  if (report.successes > 0)
  {
    exec /= report.successes;
    pos /= report.successes;
    quat /= report.successes;
  }
  report.mean_exec_time_s = exec;
  report.mean_pos_error = pos;
  report.mean_quat_error = quat;
  report.mean_plan_seconds = n > 0 ? plan / n : 0.0;
  report.mean_cso_seconds = n > 0 ? cso / n : 0.0;
  report.mean_wall_seconds = n > 0 ? wall / n : 0.0;
  return report;
}

std::vector<TrialRecord> run_method(const ExperimentConfig& config, Method method,
                                    std::vector<TrialSetup>* setups)
{
  const int trials = config.trials;
  std::vector<TrialRecord> records(static_cast<size_t>(trials));
  std::vector<TrialSetup> local_setups(static_cast<size_t>(trials));

  int workers = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SCSP_WORKERS"))
  {
    workers = std::max(1, std::atoi(env));
  }
  workers = std::max(1, std::min(workers, trials));

  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true)
    {
      const int i = next.fetch_add(1);
      if (i >= trials) break;
      TrialSetup setup = make_trial(config, method, i);
      try
      {
        records[static_cast<size_t>(i)] =
            run_trial(setup.scene, setup.task, setup.planner, setup.seed, config.disturbances);
      }
      catch (const std::exception& e)
      {
        records[static_cast<size_t>(i)].hard_error = true;
        records[static_cast<size_t>(i)].error_message = e.what();
      }
      local_setups[static_cast<size_t>(i)] = std::move(setup);
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  if (setups != nullptr) *setups = std::move(local_setups);
  return records;
}

// ===== Output emission =====

const char* kCsvHeader =
    "method,trial,seed,success,hard_error,steps,exec_time_s,wall_seconds,"
    "final_pos_error,final_quat_error,mean_plan_seconds,mean_cso_seconds,"
    "max_kkt_violation,gamma_transitions,error_message";

std::string trial_csv_row(const std::string& method, int trial, uint64_t seed,
                          const TrialRecord& r)
{
  std::ostringstream out;
  out << method << ',' << trial << ',' << seed << ',' << (r.success ? 1 : 0) << ','
      << (r.hard_error ? 1 : 0) << ',' << r.steps << ',' << r.exec_time_s << ','
      << r.wall_seconds << ',' << r.final_pos_error << ',' << r.final_quat_error << ','
      << r.mean_plan_seconds << ',' << r.mean_cso_seconds << ',' << r.max_kkt_violation << ','
      << r.gamma_transitions << ',' << '"' << r.error_message << '"';
  return out.str();
}

void write_svg_lines(const std::string& path,
                     const std::vector<std::vector<std::pair<double, double>>>& series,
                     const std::string& title)
{
  const int width = 640, height = 400, margin = 48;
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  bool first = true;
  for (const auto& s : series)
  {
    for (const auto& [x, y] : s)
    {
      if (first)
      {
        xmin = xmax = x;
        ymin = ymax = y;
        first = false;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;

  auto px = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin); };
  auto py = [&](double y) { return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin); };

  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  for (size_t s = 0; s < series.size(); ++s)
  {
    out << "<polyline fill=\"none\" stroke=\"" << colors[s % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[s])
    {
      out << px(x) << ',' << py(y) << ' ';
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
}

namespace
{

void emit_outputs(const ExperimentConfig& config, const std::string& tag,
                  const std::vector<std::pair<std::string, std::vector<TrialRecord>>>& batteries,
                  const AggregateReport& report)
{
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);

  std::ofstream csv(fs::path(config.out_dir) / (tag + "_results.csv"));
  csv << kCsvHeader << "\n";
  for (const auto& [method, records] : batteries)
  {
    for (size_t i = 0; i < records.size(); ++i)
    {
      csv << trial_csv_row(method, static_cast<int>(i),
                           config.seed_base + static_cast<uint64_t>(i), records[i])
          << "\n";
    }
  }

  std::ofstream md(fs::path(config.out_dir) / (tag + "_report.md"));
  md << "# " << tag << " report\n\n";
  md << "Errors are averaged over successful trials only.\n\n";
  md << "| method | trials | success | exec time (s) | plan (ms) | cso (ms) | pos err (m) | "
        "quat err | hard errors |\n";
  md << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& m : report.methods)
  {
    md << "| " << m.method << " | " << m.trials << " | " << m.success_rate << " | "
       << m.mean_exec_time_s << " | " << m.mean_plan_seconds * 1e3 << " | "
       << m.mean_cso_seconds * 1e3 << " | " << m.mean_pos_error << " | " << m.mean_quat_error
       << " | " << m.hard_errors << " |\n";
  }
  if (!report.by_ns.empty())
  {
    md << "\n| n_s | success | plan (ms) |\n|---|---|---|\n";
    for (const auto& [ns, m] : report.by_ns)
    {
      md << "| " << ns << " | " << m.success_rate << " | " << m.mean_plan_seconds * 1e3 << " |\n";
    }
  }

  // Error-vs-step curves from the first traced trial of each battery.
  std::vector<std::vector<std::pair<double, double>>> pos_series;
  for (const auto& [method, records] : batteries)
  {
    for (const auto& r : records)
    {
      if (r.trace.empty()) continue;
      std::vector<std::pair<double, double>> s;
      for (const auto& row : r.trace) s.emplace_back(row.step, row.pos_error);
      pos_series.push_back(std::move(s));
      break;
    }
  }
  if (!pos_series.empty())
  {
    write_svg_lines((fs::path(config.out_dir) / (tag + "_pos_error.svg")).string(), pos_series,
                    "object position error vs step");
  }

  if (config.save_trajectories)
  {
    for (const auto& [method, records] : batteries)
    {
      for (size_t i = 0; i < records.size(); ++i)
      {
        if (records[i].trace.empty()) continue;
        std::ofstream jsonl(fs::path(config.out_dir) /
                            (tag + "_" + method + "_trial" + std::to_string(i) + ".jsonl"));
        jsonl << trace_to_jsonl(records[i]);
      }
    }
  }
}

}  // namespace

AggregateReport run_batch(const ExperimentConfig& config)
{
  AggregateReport report;
  std::vector<std::pair<std::string, std::vector<TrialRecord>>> batteries;
  const Method method = method_from_string(config.method);
  auto records = run_method(config, method);
  report.methods.push_back(summarize(config.method, records));
  report.total_trials += static_cast<int>(records.size());
  report.total_hard_errors += report.methods.back().hard_errors;
  batteries.emplace_back(config.method, std::move(records));
  emit_outputs(config, "batch_" + config.method, batteries, report);
  return report;
}

AggregateReport run_sweep(const ExperimentConfig& config)
{
  AggregateReport report;
  std::vector<std::pair<std::string, std::vector<TrialRecord>>> batteries;
  for (int ns : config.ns_sweep)
  {
    ExperimentConfig sub = config;
    sub.scene.n_s = ns;
    auto records = run_method(sub, Method::Scsp);
    MethodReport m = summarize("scsp_ns" + std::to_string(ns), records);
    report.by_ns[ns] = m;
    report.methods.push_back(m);
    report.total_trials += static_cast<int>(records.size());
    report.total_hard_errors += m.hard_errors;
    batteries.emplace_back(m.method, std::move(records));
  }
  emit_outputs(config, "sweep", batteries, report);
  return report;
}

// ===== Audits =====

AuditScene make_audit_scene(uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  AuditScene scene;
  SystemParams params;
  const double mass = 0.05 + 0.45 * uni(rng);
  const double inertia = 1e-4 * std::pow(10.0, 2.0 * uni(rng));
  params = make_params(mass, inertia);
  params.mu_env = 0.3 + 0.4 * uni(rng);
  params.contact_reg = 1e-3;
  scene.params = params;

  scene.state.x_o.p = Vec3(0.0, 0.0, 0.04 + 0.04 * uni(rng));
  scene.state.x_o.q = Quat::Identity();

  const int n_contacts = 1 + static_cast<int>(uni(rng) * 4.0);
  std::vector<ContactPoint> contacts;
  for (int i = 0; i < std::min(n_contacts, 4); ++i)
  {
    ContactPoint c;
    c.p = Vec3(-0.06 + 0.12 * uni(rng), -0.06 + 0.12 * uni(rng), 0.0);
    c.n = Vec3::UnitZ();
    c.t1 = Vec3::UnitX();
    c.t2 = Vec3::UnitY();
    c.phi = 0.0;
    c.pair = ContactPair::EnvObject;
    contacts.push_back(c);
  }
  scene.frozen = freeze_scene(scene.state, contacts, params);

  // Bounded random applied wrench (a push somewhere on the object).
  const Vec3 at(-0.05 + 0.1 * uni(rng), -0.05 + 0.1 * uni(rng), 0.02 + 0.06 * uni(rng));
  Vec3 f(2.0 * uni(rng) - 1.0, 2.0 * uni(rng) - 1.0, -uni(rng));
  f *= 0.5;
  scene.applied_wrench.head<3>() = f;
  scene.applied_wrench.tail<3>() = (at - scene.state.x_o.p).cross(f);
  return scene;
}

std::string AuditReport::summary() const
{
  std::ostringstream out;
  out << "audits over " << scenes << " scenes\n"
      << "  error-bound (lemma 3):      " << lemma3_violations << " / " << lemma3_checked
      << " violations\n"
      << "  diagonal optimality (app A): " << appendix_a_failures << " / " << appendix_a_cases
      << " failures\n"
      << "  piecewise linearity:         " << linearity_failures << " / " << linearity_checked
      << " failures\n"
      << "  gradient vs finite diff:     " << gradient_failures << " / " << gradient_checked
      << " failures\n"
      << "  lift/place case split:       " << lemma4_failures << " / " << lemma4_cases
      << " failures\n"
      << (ok() ? "ALL AUDITS PASS" : "AUDIT FAILURES PRESENT");
  if (!ok()) out << " (first failing seed " << first_failing_seed << ")";
  return out.str();
}

AuditReport run_audits(int scenes, uint64_t seed)
{
  AuditReport report;
  report.scenes = scenes;
  auto fail = [&](uint64_t s) {
    if (report.first_failing_seed == 0) report.first_failing_seed = s;
  };

  // ===== Lemma 3: SCM one-step error bound =====
  for (int i = 0; i < scenes; ++i)
  {
    const uint64_t s = seed + static_cast<uint64_t>(i);
    const AuditScene audit = make_audit_scene(s);
    const auto& frozen = audit.frozen;
    if (frozen.n_env == 0) continue;

    const Vec6 v_scm = scm_velocity(frozen, audit.applied_wrench);

    // Exact frozen-scene response: the env LCP with the full Delassus matrix.
    const Vec6 w = frozen.tau_o + audit.applied_wrench;
    const Vec6 btilde = frozen.h * w;
    const int rows = frozen.n_env * frozen.rows_per_contact;
    MatX J_all(rows, 6);
    for (int c = 0; c < frozen.n_env; ++c)
    {
      J_all.middleRows(c * frozen.rows_per_contact, frozen.rows_per_contact) =
          frozen.J_env[static_cast<size_t>(c)];
    }
    const VecX g = J_all * (frozen.Minv * btilde);
    const NnQpResult qp = solve_nonneg_qp(frozen.W_full, g);
    const Vec6 v_real = frozen.Minv * (btilde + J_all.transpose() * qp.x);

    MatX D_mat = MatX::Zero(rows, rows);
    for (int c = 0; c < frozen.n_env; ++c)
    {
      D_mat.block(c * frozen.rows_per_contact, c * frozen.rows_per_contact,
                  frozen.rows_per_contact, frozen.rows_per_contact)
          .diagonal() = frozen.D[static_cast<size_t>(c)];
    }
    Eigen::SelfAdjointEigenSolver<MatX> eig(frozen.W_full);
    const double sigma = 1.0 / std::max(eig.eigenvalues().minCoeff(), 1e-12);
    double j_norm_sum = 0.0;
    for (const auto& J : frozen.J_env)
    {
      Eigen::JacobiSVD<MatX> svd(J);
      j_norm_sum += svd.singularValues().maxCoeff();
    }
    const double m_norm = frozen.Minv.norm() > 0
                              ? Eigen::JacobiSVD<Mat6>(frozen.Minv).singularValues().maxCoeff()
                              : 0.0;
    const double C = frozen.h * m_norm * j_norm_sum * sigma;
    Eigen::SelfAdjointEigenSolver<MatX> gap(frozen.W_full - D_mat);
    const double bound = C * gap.eigenvalues().cwiseAbs().maxCoeff();
    const double error = frozen.h * (v_real - v_scm).norm();
    ++report.lemma3_checked;
    if (error > bound + 1e-12)
    {
      ++report.lemma3_violations;
      fail(s);
    }
  }

  // ===== Appendix A: diag(W) is the Frobenius-closest diagonal =====
  {
    std::mt19937_64 rng(seed ^ 0xA11Au);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const int cases = 500;
    for (int i = 0; i < cases; ++i)
    {
      Mat3 A;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) A(r, c) = gauss(rng);
      const Mat3 W = A * A.transpose() + 0.1 * Mat3::Identity();
      const Vec3 d_star = W.diagonal();
      const double best = (W - Mat3(d_star.asDiagonal())).squaredNorm();
      ++report.appendix_a_cases;
      bool ok = true;
      for (int p = 0; p < 10000; ++p)
      {
        Vec3 perturbed = d_star;
        for (int k = 0; k < 3; ++k) perturbed[k] += uni(rng);
        if ((W - Mat3(perturbed.asDiagonal())).squaredNorm() < best - 1e-12)
        {
          ok = false;
          break;
        }
      }
      if (!ok)
      {
        ++report.appendix_a_failures;
        fail(seed ^ 0xA11Au);
      }
    }
  }

  // ===== Lemma 2: piecewise linearity and the clamp-aware gradient =====
  {
    std::mt19937_64 rng(seed ^ 0x1E44Au);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    int linear_done = 0, grad_done = 0;
    for (uint64_t attempt = 0; linear_done < 200 && attempt < 4000; ++attempt)
    {
      const AuditScene audit = make_audit_scene(seed + 7000 + attempt);
      if (audit.frozen.n_env == 0) continue;
      const Vec6 wa = audit.applied_wrench;
      Vec6 wb = wa;
      for (int k = 0; k < 6; ++k) wb[k] += 0.02 * (2.0 * uni(rng) - 1.0);
      if (clamp_pattern(audit.frozen, wa) != clamp_pattern(audit.frozen, wb)) continue;
      const Vec6 mid = 0.5 * (wa + wb);
      if (clamp_pattern(audit.frozen, mid) != clamp_pattern(audit.frozen, wa)) continue;
      const auto fa = env_force(audit.frozen, wa);
      const auto fb = env_force(audit.frozen, wb);
      const auto fm = env_force(audit.frozen, mid);
      ++report.linearity_checked;
      ++linear_done;
      for (size_t c = 0; c < fa.size(); ++c)
      {
        const VecX expect = 0.5 * (fa[c] + fb[c]);
        const double scale = 1.0 + expect.cwiseAbs().maxCoeff();
        if (((fm[c] - expect).cwiseAbs().maxCoeff()) > 1e-12 * scale)
        {
          ++report.linearity_failures;
          fail(seed + 7000 + attempt);
          break;
        }
      }
    }

    for (uint64_t attempt = 0; grad_done < 100 && attempt < 4000; ++attempt)
    {
      const AuditScene audit = make_audit_scene(seed + 90000 + attempt);
      if (audit.frozen.n_env == 0) continue;
      // A robot contact pressing down near the top of the virtual object.
      const Vec3 at(0.02, -0.01, 0.06);
      SurfaceSample sample;
      sample.p = audit.state.x_o.q.conjugate() * (at - audit.state.x_o.p);
      sample.n = Vec3(0.3, 0.2, 0.93).normalized();
      build_frame(sample);
      const WrenchMap J_r = robot_wrench_map(sample, audit.state.x_o);
      const Vec3 lambda(0.05 + 0.1 * uni(rng), 0.02 * (2 * uni(rng) - 1), 0.02 * (2 * uni(rng) - 1));

      // Interior check: the clamp pattern must not change within the stencil.
      const double delta = 1e-6;
      bool interior = true;
      const auto base_pattern = clamp_pattern(audit.frozen, J_r.transpose() * lambda);
      for (int k = 0; k < 3 && interior; ++k)
      {
        for (double sgn : {-1.0, 1.0})
        {
          Vec3 probe = lambda;
          probe[k] += sgn * delta;
          if (clamp_pattern(audit.frozen, J_r.transpose() * probe) != base_pattern)
          {
            interior = false;
            break;
          }
        }
      }
      if (!interior) continue;

      const ScmGradient grad = scm_gradient(audit.frozen, audit.state, J_r, lambda);
      ++report.gradient_checked;
      ++grad_done;
      bool ok = true;
      for (int k = 0; k < 3 && ok; ++k)
      {
        Vec3 hip = lambda, him = lambda;
        hip[k] += delta;
        him[k] -= delta;
        const ScmPrediction pp = scm_predict(audit.frozen, audit.state, J_r.transpose() * hip);
        const ScmPrediction pm = scm_predict(audit.frozen, audit.state, J_r.transpose() * him);
        Eigen::Matrix<double, 7, 1> fd;
        fd.head<3>() = (pp.x_next.p - pm.x_next.p) / (2.0 * delta);
        fd.tail<4>() = (quat_wxyz(pp.x_next.q) - quat_wxyz(pm.x_next.q)) / (2.0 * delta);
        const Eigen::Matrix<double, 7, 1> an = grad.dx_dlambda.col(k);
        const double denom = std::max(1e-9, an.norm());
        if ((fd - an).norm() / denom > 1e-5) ok = false;
      }
      if (!ok)
      {
        ++report.gradient_failures;
        fail(seed + 90000 + attempt);
      }
    }
  }

  // ===== Lemma 4: the lift/place convex combination is an exact case split =====
  {
    std::mt19937_64 rng(seed ^ 0x4E44u);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    CpoCostSpec spec;
    for (int i = 0; i < 200; ++i)
    {
      const Vec3 p_ee(uni(rng), uni(rng), uni(rng));
      const Vec3 p_o(uni(rng), uni(rng), uni(rng));
      const Vec3 p_lift(uni(rng), uni(rng), uni(rng));
      const Vec3 p_ref(uni(rng), uni(rng), uni(rng));
      ++report.lemma4_cases;
      const bool lift_ok =
          lp_cost(0, p_ee, p_o, p_lift, p_ref, spec) == lift_cost(p_ee, p_o, p_lift, spec);
      const bool place_ok =
          lp_cost(1, p_ee, p_o, p_lift, p_ref, spec) == place_cost(p_ee, p_o, p_ref, spec);
      if (!lift_ok || !place_ok)
      {
        ++report.lemma4_failures;
        fail(seed ^ 0x4E44u);
      }
    }
  }

  return report;
}

}  // namespace scsp
