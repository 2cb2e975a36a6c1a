#include <doctest.h>

#include <chrono>
#include <random>

#include "oracles.hpp"
#include "scsp/cso.hpp"

using namespace scsp;

namespace
{

struct PushScene
{
  TriMesh mesh;
  CandidateSet candidates;
  SystemParams params;
  WorldState state;
  ScmFrozenScene frozen;
  CsoObjectiveSpec spec;
};

// Resting cube, goal displaced along +x; candidates on all faces.
PushScene make_push_scene(int n_s = 24, double goal_dx = 0.15)
{
  PushScene s;
  s.mesh = make_box(Vec3(0.08, 0.08, 0.08));
  const auto samples = farthest_point_sample(s.mesh, n_s, 0);
  s.candidates = apply_valid_mask(samples, [](const SurfaceSample&) { return true; });
  s.params = make_params(0.1, mass_properties(s.mesh, 0.1).inertia.trace() / 3.0);
  s.state.x_o.p = Vec3(0.0, 0.0, 0.04);
  s.state.p_ee = Vec3(1.0, 1.0, 1.0);
  std::vector<ContactPoint> env;
  for (const auto& c : detect_contacts(s.state, s.mesh, s.candidates, s.params))
  {
    if (c.pair == ContactPair::EnvObject) env.push_back(c);
  }
  s.frozen = freeze_scene(s.state, select_support_contacts(env), s.params);
  s.spec.x_goal.p = s.state.x_o.p + Vec3(goal_dx, 0.0, 0.0);
  s.spec.x_goal.q = Quat::Identity();
  return s;
}

// Single support directly under the center of mass: the surrogate
// predicts (near) zero motion at zero force.
ScmFrozenScene balanced_freeze(const PushScene& s)
{
  ContactPoint support;
  support.p = Vec3(s.state.x_o.p.x(), s.state.x_o.p.y(), 0.0);
  support.n = Vec3::UnitZ();
  support.t1 = Vec3::UnitX();
  support.t2 = Vec3::UnitY();
  support.phi = 0.0;
  support.pair = ContactPair::EnvObject;
  return freeze_scene(s.state, {support}, s.params);
}

}  // namespace

TEST_CASE("cso_objective: goal pose, weighted position error, stab branch")
{
  CsoObjectiveSpec spec;
  spec.x_goal.p = Vec3(0.1, 0.2, 0.04);
  spec.x_goal.q = Quat::Identity();

  // At the goal: zero.
  Pose at_goal = spec.x_goal;
  CHECK(cso_objective(at_goal, at_goal, spec) == 0.0);

  // Upright object and goal, positions 0.1 m apart, w_pos = 500:
  // the in-goal-set branch gives 500 * 0.01 = 5.
  Pose shifted = spec.x_goal;
  shifted.p += Vec3(0.1, 0.0, 0.0);
  CHECK(cso_objective(shifted, shifted, spec) == doctest::Approx(5.0).epsilon(1e-12));

  // Object rotated 90 degrees about x, upright goal: transfer-cost branch,
  // 1 - cos(90 deg) = 1.
  Pose tipped;
  tipped.p = spec.x_goal.p;
  tipped.q = quat_exp(Vec3(M_PI / 2.0, 0.0, 0.0));
  CHECK(!in_goal_stable_set(tipped, spec));
  CHECK(cso_objective(tipped, tipped, spec) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("project_pyramid_box: exact projection properties")
{
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const double mu = 0.5, cap = 0.2;
  auto feasible = [&](const Vec3& l) {
    return l[0] >= -1e-12 && l[0] <= cap + 1e-12 && std::abs(l[1]) <= mu * l[0] + 1e-12 &&
           std::abs(l[2]) <= mu * l[0] + 1e-12;
  };
  for (int i = 0; i < 500; ++i)
  {
    const Vec3 point(0.4 * uni(rng), 0.4 * uni(rng), 0.4 * uni(rng));
    const Vec3 proj = project_pyramid_box(point, mu, cap);
    CHECK(feasible(proj));
    // Idempotent.
    CHECK((project_pyramid_box(proj, mu, cap) - proj).norm() < 1e-12);
    // No feasible grid point is closer.
    const double d_proj = (proj - point).squaredNorm();
    for (double n = 0.0; n <= cap + 1e-12; n += cap / 20)
    {
      for (double t1 = -mu * n; t1 <= mu * n + 1e-12; t1 += std::max(mu * n / 5, 1e-3))
      {
        for (double t2 = -mu * n; t2 <= mu * n + 1e-12; t2 += std::max(mu * n / 5, 1e-3))
        {
          CHECK((Vec3(n, t1, t2) - point).squaredNorm() >= d_proj - 1e-9);
        }
      }
    }
  }
  // mu = 0: pure box on the normal component.
  const Vec3 p0 = project_pyramid_box(Vec3(0.5, 0.3, -0.2), 0.0, 0.2);
  CHECK((p0 - Vec3(0.2, 0.0, 0.0)).norm() < 1e-15);
}

TEST_CASE("eval_candidate: zero force at the goal, cap respected, kkt residual")
{
  PushScene scene = make_push_scene();

  // Goal equals the current pose (balanced scene): zero force, zero cost.
  CsoObjectiveSpec at_goal = scene.spec;
  at_goal.x_goal = scene.state.x_o;
  const ScmFrozenScene balanced = balanced_freeze(scene);
  const CandidateEval idle = eval_candidate(scene.candidates.samples[0], balanced,
                                            scene.state, at_goal, scene.params, {});
  CHECK(idle.cost <= 1e-4);
  CHECK(idle.lambda.norm() <= 1e-3);

  // Push task: the returned normal force respects the paper's cap.
  CsoSolverParams solver;
  for (size_t i = 0; i < scene.candidates.samples.size(); ++i)
  {
    const CandidateEval eval = eval_candidate(scene.candidates.samples[i], scene.frozen,
                                              scene.state, scene.spec, scene.params, solver);
    CHECK(eval.lambda[0] >= 0.0);
    CHECK(eval.lambda[0] <= scene.params.lambda_n_max + 1e-12);
    CHECK(std::abs(eval.lambda[1]) <= scene.params.mu_r * eval.lambda[0] + 1e-12);
    CHECK(std::abs(eval.lambda[2]) <= scene.params.mu_r * eval.lambda[0] + 1e-12);
    CHECK(eval.kkt_residual <= 1e-7);
  }
}

TEST_CASE("eval_candidate: back-face candidates beat front-face candidates for a +x push")
{
  PushScene scene = make_push_scene();

  // Hand-placed candidates at face centers.
  std::vector<SurfaceSample> hand(2);
  hand[0].p = Vec3(-0.04, 0.0, 0.0);
  hand[0].n = -Vec3::UnitX();  // -x face (behind, relative to the goal)
  hand[1].p = Vec3(0.04, 0.0, 0.0);
  hand[1].n = Vec3::UnitX();  // +x face (goal side)
  for (auto& s : hand) build_frame(s);

  const CandidateEval back = eval_candidate(hand[0], scene.frozen, scene.state, scene.spec,
                                            scene.params, {});
  const CandidateEval front = eval_candidate(hand[1], scene.frozen, scene.state, scene.spec,
                                             scene.params, {});
  CHECK(back.cost < front.cost);

  // The grid-search oracle agrees about each candidate's optimum.
  const auto grid_back = oracle::grid_search_force(hand[0], scene.frozen, scene.state, scene.spec,
                                                   scene.params, 0.005);
  CHECK(back.cost <= grid_back.cost + 1e-9);
}

TEST_CASE("select_contact: argmin semantics, tie-break, scaling invariance")
{
  PushScene scene = make_push_scene(24);
  CsoSolverParams solver;
  const CsoResult result = select_contact(scene.candidates, scene.frozen, scene.state,
                                          scene.spec, scene.params, solver);

  // Argmin equals a linear re-scan of the per-candidate costs.
  int best = -1;
  for (size_t i = 0; i < result.costs.size(); ++i)
  {
    if (!std::isfinite(result.costs[i])) continue;
    if (best < 0 || result.costs[i] < result.costs[static_cast<size_t>(best)])
    {
      best = static_cast<int>(i);
    }
  }
  CHECK(result.best_index == best);
  CHECK(result.l_min <= result.l_max);
  // The winner lies on the half of the cube away from the goal.
  CHECK(result.p_star.x() < scene.state.x_o.p.x() + 1e-9);

  // Single valid candidate wins regardless of cost.
  std::vector<SurfaceSample> one(1);
  one[0].p = Vec3(0.04, 0.0, 0.0);
  one[0].n = Vec3::UnitX();
  build_frame(one[0]);
  const auto single = apply_valid_mask(one, [](const SurfaceSample&) { return true; });
  const CsoResult forced = select_contact(single, scene.frozen, scene.state, scene.spec,
                                          scene.params, solver);
  CHECK(forced.best_index == 0);

  // Duplicate geometry: the lower index wins.
  std::vector<SurfaceSample> dup(2, one[0]);
  const auto dup_set = apply_valid_mask(dup, [](const SurfaceSample&) { return true; });
  const CsoResult tied = select_contact(dup_set, scene.frozen, scene.state, scene.spec,
                                        scene.params, solver);
  CHECK(tied.best_index == 0);

  // Uniform cost scaling leaves the argmin unchanged.
  CsoObjectiveSpec scaled = scene.spec;
  scaled.w_pos *= 3.7;
  scaled.w_quat *= 3.7;
  const CsoResult scaled_result = select_contact(scene.candidates, scene.frozen, scene.state,
                                                 scaled, scene.params, solver);
  CHECK(scaled_result.best_index == result.best_index);

  // JSON export carries the cost map.
  const std::string json = cso_result_to_json(result);
  CHECK(json.find("best_index") != std::string::npos);
}

TEST_CASE("select_contact: grid-search oracle agreement on small 2D scenes")
{
  // Eight candidates around the cube's waist; 40 randomized goals. The
  // acceptance suite runs the full 200-scene version.
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  int agree = 0, checked = 0;
  for (int trial = 0; trial < 40; ++trial)
  {
    PushScene scene = make_push_scene();
    const double angle = M_PI * uni(rng);
    scene.spec.x_goal.p = scene.state.x_o.p + 0.15 * Vec3(std::cos(angle), std::sin(angle), 0.0);

    std::vector<SurfaceSample> ring(8);
    for (int k = 0; k < 8; ++k)
    {
      const double a = 2.0 * M_PI * k / 8.0;
      const Vec3 dir(std::cos(a), std::sin(a), 0.0);
      const Vec3 face = std::abs(dir.x()) >= std::abs(dir.y())
                            ? Vec3(dir.x() > 0 ? 1 : -1, 0, 0)
                            : Vec3(0, dir.y() > 0 ? 1 : -1, 0);
      ring[static_cast<size_t>(k)].p =
          0.04 * face + Vec3(0.02 * face.y(), 0.02 * face.x(), 0.01 * uni(rng));
      ring[static_cast<size_t>(k)].n = face;
      build_frame(ring[static_cast<size_t>(k)]);
    }
    const auto set = apply_valid_mask(ring, [](const SurfaceSample&) { return true; });
    const CsoResult result =
        select_contact(set, scene.frozen, scene.state, scene.spec, scene.params, {});

    int grid_best = -1;
    double grid_cost = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 8; ++k)
    {
      const auto grid = oracle::grid_search_force(ring[static_cast<size_t>(k)], scene.frozen,
                                                  scene.state, scene.spec, scene.params, 0.005);
      if (grid.cost < grid_cost)
      {
        grid_cost = grid.cost;
        grid_best = k;
      }
    }
    ++checked;
    if (result.best_index == grid_best)
    {
      ++agree;
    }
    else
    {
      // Disagreements must be within the grid's own resolution.
      CHECK(std::abs(result.costs[static_cast<size_t>(result.best_index)] - grid_cost) <=
            0.005);
    }
  }
  CHECK(checked == 40);
  CHECK(agree >= static_cast<int>(0.95 * checked));
}

TEST_CASE("force_closure_objective: antipodal grasp, infeasible budget, trivial zero")
{
  // Antipodal contacts on a sphere span +-x force disturbances.
  std::vector<FcContact> contacts(2);
  contacts[0].p = Vec3(0.05, 0.0, 0.0);
  contacts[0].n_out = Vec3::UnitX();
  contacts[1].p = Vec3(-0.05, 0.0, 0.0);
  contacts[1].n_out = -Vec3::UnitX();

  ForceClosureParams params;
  params.zeta = 0.05;
  params.lambda_max = 0.5;
  params.xi = 0.1;
  std::vector<Vec6> disturbances(2, Vec6::Zero());
  disturbances[0][0] = 1.0;
  disturbances[1][0] = -1.0;

  const ForceClosureResult result =
      force_closure_objective(contacts, disturbances, Vec3::Zero(), params);
  // Residual below the regularization floor: the wrenches are realizable.
  CHECK(result.cost < 0.05);

  // A single contact cannot resist a disturbance opposing its cone: the
  // cost is bounded below by the projection distance onto the cone image.
  std::vector<FcContact> single(1);
  single[0].p = Vec3(0.05, 0.0, 0.0);
  single[0].n_out = Vec3::UnitX();  // can only push along -x
  std::vector<Vec6> opposing(1, Vec6::Zero());
  opposing[0][0] = 1.0;  // demands +x force
  ForceClosureParams weak = params;
  weak.zeta = 0.0;
  const ForceClosureResult blocked =
      force_closure_objective(single, opposing, Vec3::Zero(), weak);
  // Best case: lambda = 0; any push worsens the residual. Projection
  // distance of xi*w onto the cone image is xi^2 * ||w||^2 here.
  CHECK(blocked.cost >= params.xi * params.xi - 1e-9);

  // zeta = 0 and no disturbance: zero force, zero cost.
  std::vector<Vec6> none(1, Vec6::Zero());
  const ForceClosureResult idle = force_closure_objective(single, none, Vec3::Zero(), weak);
  CHECK(idle.cost == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(idle.forces[0][0].norm() < 1e-9);

  // zeta above the total force budget: infeasible grasp.
  ForceClosureParams impossible = params;
  impossible.zeta = 2.0;
  impossible.lambda_max = 0.2;
  CHECK_THROWS(force_closure_objective(contacts, disturbances, Vec3::Zero(), impossible));
}

TEST_CASE("eval_candidate timing stays in the sub-millisecond regime")
{
  PushScene scene = make_push_scene(24);
  std::vector<double> times;
  for (size_t i = 0; i < scene.candidates.samples.size(); ++i)
  {
    const CandidateEval eval = eval_candidate(scene.candidates.samples[i], scene.frozen,
                                              scene.state, scene.spec, scene.params, {});
    times.push_back(eval.wall_seconds);
  }
  std::sort(times.begin(), times.end());
  // Unit-test bound is loose (5 ms); the acceptance suite pins the 1 ms
  // median from the timing criterion.
  CHECK(times[times.size() / 2] < 5e-3);
}
