#include "scsp/cso.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace scsp
{

namespace
{

Vec3 rotated_ez(const Quat& q)
{
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  return Vec3(2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y));
}

// d(R(q) e_z)/dq, columns ordered (w, x, y, z).
Eigen::Matrix<double, 3, 4> drotated_ez(const Quat& q)
{
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Eigen::Matrix<double, 3, 4> d;
  d.col(0) << 2.0 * y, -2.0 * x, 0.0;
  d.col(1) << 2.0 * z, -2.0 * w, -4.0 * x;
  d.col(2) << 2.0 * w, 2.0 * z, -4.0 * y;
  d.col(3) << 2.0 * x, 2.0 * y, 0.0;
  return d;
}

struct ObjectiveGrad
{
  Vec3 dpos{Vec3::Zero()};
  Vec4 dquat{Vec4::Zero()};
};

ObjectiveGrad objective_gradient(const Pose& x, const CsoObjectiveSpec& spec, bool stab_branch)
{
  ObjectiveGrad g;
  if (stab_branch)
  {
    const Vec3 gz = rotated_ez(spec.x_goal.q);
    g.dquat = -(drotated_ez(x.q).transpose() * gz);
  }
  else
  {
    g.dpos = 2.0 * spec.w_pos * (x.p - spec.x_goal.p);
    const double dot = quat_wxyz(x.q).dot(quat_wxyz(spec.x_goal.q));
    g.dquat = -2.0 * spec.w_quat * dot * quat_wxyz(spec.x_goal.q);
  }
  return g;
}

}  // namespace

bool in_goal_stable_set(const Pose& x, const CsoObjectiveSpec& spec)
{
  if (!spec.use_stab_switch) return true;
  return rotated_ez(x.q).dot(rotated_ez(spec.x_goal.q)) >= 1.0 - spec.stab_tol;
}

double stab_cost(const Pose& x, const CsoObjectiveSpec& spec)
{
  return 1.0 - rotated_ez(x.q).dot(rotated_ez(spec.x_goal.q));
}

double pose_cost(const Pose& x, const CsoObjectiveSpec& spec)
{
  return spec.w_pos * (x.p - spec.x_goal.p).squaredNorm() + spec.w_quat * quat_error(x.q, spec.x_goal.q);
}

double cso_objective(const Pose& x_next, const Pose& x_current, const CsoObjectiveSpec& spec)
{
  if (!in_goal_stable_set(x_current, spec)) return stab_cost(x_next, spec);
  return pose_cost(x_next, spec);
}

Vec3 project_pyramid_box(const Vec3& lambda, double mu, double n_max)
{
  const double n0 = lambda[0];
  const Vec3 t0(0.0, lambda[1], lambda[2]);

  if (mu <= 0.0)
  {
    return Vec3(std::clamp(n0, 0.0, n_max), 0.0, 0.0);
  }

  auto objective = [&](double n) {
    const double t1 = std::clamp(t0[1], -mu * n, mu * n);
    const double t2 = std::clamp(t0[2], -mu * n, mu * n);
    return (n - n0) * (n - n0) + (t1 - t0[1]) * (t1 - t0[1]) + (t2 - t0[2]) * (t2 - t0[2]);
  };

  // Stationary n on each clamp interval plus all breakpoints; exact since
  // the objective is piecewise quadratic in n.
  const double b1 = std::abs(t0[1]) / mu;
  const double b2 = std::abs(t0[2]) / mu;
  std::vector<double> candidates{0.0, n_max, std::clamp(b1, 0.0, n_max), std::clamp(b2, 0.0, n_max)};
  const double lo = std::min(b1, b2), hi = std::max(b1, b2);
  struct Interval
  {
    double a, b;
  };
  const Interval intervals[3] = {{0.0, lo}, {lo, hi}, {hi, std::numeric_limits<double>::infinity()}};
  for (const auto& iv : intervals)
  {
    double num = n0, den = 1.0;
    // t_i is clamped when n < |t0_i|/mu.
    const double mid = 0.5 * (iv.a + std::min(iv.b, iv.a + 1.0));
    for (int i = 1; i <= 2; ++i)
    {
      if (mid < std::abs(t0[i]) / mu)
      {
        num += mu * std::abs(t0[i]);
        den += mu * mu;
      }
    }
    const double n_star = std::clamp(num / den, std::max(iv.a, 0.0), std::min(iv.b, n_max));
    if (std::isfinite(n_star)) candidates.push_back(n_star);
  }

  double best_n = 0.0;
  double best_f = std::numeric_limits<double>::infinity();
  for (double n : candidates)
  {
    if (n < 0.0 || n > n_max) continue;
    const double f = objective(n);
    if (f < best_f)
    {
      best_f = f;
      best_n = n;
    }
  }
  return Vec3(best_n, std::clamp(t0[1], -mu * best_n, mu * best_n),
              std::clamp(t0[2], -mu * best_n, mu * best_n));
}

CandidateEval eval_candidate(const SurfaceSample& sample, const ScmFrozenScene& frozen,
                             const WorldState& state, const CsoObjectiveSpec& spec,
                             const SystemParams& sys, const CsoSolverParams& solver,
                             const Vec3& warm_start)
{
  const auto t_begin = std::chrono::steady_clock::now();

  const WrenchMap J_r = robot_wrench_map(sample, state.x_o);
  const bool stab_branch = !in_goal_stable_set(state.x_o, spec);
  const double mu = sys.mu_r;
  const double n_max = sys.lambda_n_max;

  auto cost_at = [&](const Vec3& lambda) {
    const ScmPrediction pred = scm_predict(frozen, state, J_r.transpose() * lambda);
    return stab_branch ? stab_cost(pred.x_next, spec) : pose_cost(pred.x_next, spec);
  };
  auto grad_at = [&](const Vec3& lambda) {
    const ScmGradient sg = scm_gradient(frozen, state, J_r, lambda);
    const ScmPrediction pred = scm_predict(frozen, state, J_r.transpose() * lambda);
    const ObjectiveGrad og = objective_gradient(pred.x_next, spec, stab_branch);
    Eigen::Matrix<double, 7, 1> dldx;
    dldx << og.dpos, og.dquat;
    return Vec3(sg.dx_dlambda.transpose() * dldx);
  };

  CandidateEval eval;

  // The clamp pattern of the surrogate makes the landscape piecewise
  // smooth; a coarse cone presample picks the right piece, projected
  // gradient finishes inside it.
  Vec3 best_start = project_pyramid_box(warm_start, mu, n_max);
  double best_start_cost = cost_at(best_start);
  {
    const double zero_cost = cost_at(Vec3::Zero());
    if (zero_cost < best_start_cost)
    {
      best_start = Vec3::Zero();
      best_start_cost = zero_cost;
    }
    for (double frac : {0.25, 0.5, 0.75, 1.0})
    {
      const double n = frac * n_max;
      for (double a : {-1.0, 0.0, 1.0})
      {
        for (double b : {-1.0, 0.0, 1.0})
        {
          const Vec3 probe(n, a * mu * n, b * mu * n);
          const double c = cost_at(probe);
          if (c < best_start_cost)
          {
            best_start_cost = c;
            best_start = probe;
          }
        }
      }
    }
  }

  Vec3 lambda = best_start;
  double f = best_start_cost;
  double step = solver.initial_step;
  int it = 0;
  for (; it < solver.max_iterations; ++it)
  {
    const Vec3 grad = grad_at(lambda);
    Vec3 next = lambda;
    double f_next = f;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt)
    {
      const Vec3 trial = project_pyramid_box(lambda - step * grad, mu, n_max);
      const double f_trial = cost_at(trial);
      if (f_trial <= f + 1e-15)
      {
        next = trial;
        f_next = f_trial;
        accepted = true;
        break;
      }
      step *= 0.5;
      if (step < 1e-14) break;
    }
    if (!accepted) break;  // nonsmooth stall; the presample already chose the piece
    const double residual = (next - lambda).norm() / step;
    lambda = next;
    f = f_next;
    step *= 1.3;
    if (residual <= solver.kkt_tol * (1.0 + std::abs(f)))
    {
      eval.converged = true;
      break;
    }
  }

  // Remaining-descent-rate residual: largest per-unit-step improvement over
  // the projected-gradient probe and the feasible axis probes. Unlike a raw
  // gradient norm this vanishes at clamp-kink optima.
  const double probe_delta = 1e-6;
  auto descent_residual = [&](const Vec3& l, double f_l) {
    double worst = 0.0;
    auto consider = [&](const Vec3& candidate) {
      const double d = (candidate - l).norm();
      if (d < 1e-14) return;
      worst = std::max(worst, (f_l - cost_at(candidate)) / probe_delta);
    };
    consider(project_pyramid_box(l - probe_delta * grad_at(l), mu, n_max));
    for (int k = 0; k < 3; ++k)
    {
      for (double sgn : {-1.0, 1.0})
      {
        Vec3 axis = l;
        axis[k] += sgn * probe_delta;
        consider(project_pyramid_box(axis, mu, n_max));
      }
    }
    return worst;
  };

  double residual = descent_residual(lambda, f);
  if (residual > solver.kkt_tol * (1.0 + std::abs(f)))
  {
    // Kink finisher: cyclic per-axis scans plus ternary refinement reach
    // the bottom of piecewise valleys the gradient steps bounce across.
    for (int round = 0; round < 3; ++round)
    {
      for (int k = 0; k < 3; ++k)
      {
        const double lo = k == 0 ? 0.0 : -mu * lambda[0];
        const double hi = k == 0 ? n_max : mu * lambda[0];
        if (hi - lo < 1e-12) continue;
        auto value_at = [&](double v) {
          Vec3 l = lambda;
          l[k] = v;
          return cost_at(project_pyramid_box(l, mu, n_max));
        };
        double best_v = lambda[k];
        double best_f = f;
        for (int s = 0; s <= 8; ++s)
        {
          const double v = lo + (hi - lo) * s / 8.0;
          const double fv = value_at(v);
          if (fv < best_f)
          {
            best_f = fv;
            best_v = v;
          }
        }
        double a = std::max(lo, best_v - (hi - lo) / 8.0);
        double b = std::min(hi, best_v + (hi - lo) / 8.0);
        for (int s = 0; s < 40; ++s)
        {
          const double m1 = a + (b - a) / 3.0;
          const double m2 = b - (b - a) / 3.0;
          if (value_at(m1) <= value_at(m2))
          {
            b = m2;
          }
          else
          {
            a = m1;
          }
        }
        const double v = 0.5 * (a + b);
        const double fv = value_at(v);
        if (fv < f)
        {
          lambda = project_pyramid_box((Vec3() << (k == 0 ? v : lambda[0]),
                                        (k == 1 ? v : lambda[1]), (k == 2 ? v : lambda[2]))
                                           .finished(),
                                       mu, n_max);
          f = fv;
        }
      }
    }
    residual = descent_residual(lambda, f);
  }
  eval.kkt_residual = residual;
  eval.converged = residual <= solver.kkt_tol * (1.0 + std::abs(f));

  eval.cost = f;
  eval.lambda = lambda;
  eval.iterations = it;
  if (!std::isfinite(f))
  {
    eval.cost = std::numeric_limits<double>::infinity();
    eval.converged = false;
  }
  eval.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  return eval;
}

CsoResult select_contact(const CandidateSet& candidates, const ScmFrozenScene& frozen,
                         const WorldState& state, const CsoObjectiveSpec& spec,
                         const SystemParams& sys, const CsoSolverParams& solver,
                         std::map<int, Vec3>* warm_cache)
{
  const auto t_begin = std::chrono::steady_clock::now();
  if (candidates.valid_count() < 1)
  {
    throw std::runtime_error("contact selection requires at least one valid candidate");
  }

  CsoResult result;
  result.costs.assign(candidates.samples.size(), std::numeric_limits<double>::infinity());
  result.lambdas.assign(candidates.samples.size(), Vec3::Zero());
  result.l_min = std::numeric_limits<double>::infinity();
  result.l_max = -std::numeric_limits<double>::infinity();
  std::vector<double> eval_times;

  for (size_t i = 0; i < candidates.samples.size(); ++i)
  {
    if (!candidates.valid[i]) continue;
    Vec3 warm = Vec3::Zero();
    if (warm_cache != nullptr)
    {
      const auto it = warm_cache->find(static_cast<int>(i));
      if (it != warm_cache->end()) warm = it->second;
    }
    const CandidateEval eval = eval_candidate(candidates.samples[i], frozen, state, spec, sys,
                                              solver, warm);
    ++result.evaluated;
    eval_times.push_back(eval.wall_seconds);
    if (!std::isfinite(eval.cost))
    {
      ++result.failed;
      continue;
    }
    result.costs[i] = eval.cost;
    result.lambdas[i] = eval.lambda;
    if (warm_cache != nullptr) (*warm_cache)[static_cast<int>(i)] = eval.lambda;
    result.l_min = std::min(result.l_min, eval.cost);
    result.l_max = std::max(result.l_max, eval.cost);
    if (result.best_index < 0 || eval.cost < result.costs[static_cast<size_t>(result.best_index)])
    {
      result.best_index = static_cast<int>(i);
    }
  }

  if (result.best_index < 0)
  {
    throw std::runtime_error("every contact candidate failed to evaluate");
  }
  const auto& best = candidates.samples[static_cast<size_t>(result.best_index)];
  result.p_star = state.x_o.transform(best.p);
  result.n_star_out = state.x_o.q * best.n;
  result.lambda_star = result.lambdas[static_cast<size_t>(result.best_index)];
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  if (!eval_times.empty())
  {
    std::nth_element(eval_times.begin(), eval_times.begin() + eval_times.size() / 2,
                     eval_times.end());
    result.median_eval_seconds = eval_times[eval_times.size() / 2];
  }
  return result;
}

std::string cso_result_to_json(const CsoResult& result)
{
  nlohmann::json j;
  j["best_index"] = result.best_index;
  j["p_star"] = {result.p_star.x(), result.p_star.y(), result.p_star.z()};
  j["lambda_star"] = {result.lambda_star.x(), result.lambda_star.y(), result.lambda_star.z()};
  j["l_min"] = result.l_min;
  j["l_max"] = result.l_max;
  j["evaluated"] = result.evaluated;
  j["failed"] = result.failed;
  nlohmann::json costs = nlohmann::json::array();
  for (double c : result.costs)
  {
    costs.push_back(std::isfinite(c) ? nlohmann::json(c) : nlohmann::json());
  }
  j["costs"] = costs;
  return j.dump();
}

// ===== Force closure =====

ForceClosureResult force_closure_objective(const std::vector<FcContact>& contacts,
                                           const std::vector<Vec6>& disturbances,
                                           const Vec3& object_center,
                                           const ForceClosureParams& params)
{
  const int K = static_cast<int>(contacts.size());
  if (K == 0) throw std::runtime_error("force closure needs at least one contact");
  if (params.zeta > K * params.lambda_max + 1e-12)
  {
    throw std::runtime_error("infeasible-grasp: minimum normal force exceeds the force budget");
  }

  // Per-contact wrench maps with push normals (into the object).
  std::vector<WrenchMap> maps;
  for (const auto& c : contacts)
  {
    SurfaceSample frame;
    frame.n = -c.n_out;
    build_frame(frame);
    maps.push_back(robot_wrench_map_at(c.p, frame.n, frame.t1, frame.t2, object_center));
  }

  auto solve_cone_qp = [&](const Vec6& w, double nu, std::vector<Vec3>& lambdas) {
    // min ||xi w - sum J' l||^2 + w_l sum ||l||^2 - nu sum l_n over cones.
    for (auto& l : lambdas) l = project_pyramid_box(l, params.mu, params.lambda_max);
    double step = 0.05;
    auto total_wrench = [&]() {
      Vec6 acc = Vec6::Zero();
      for (int i = 0; i < K; ++i) acc += maps[static_cast<size_t>(i)].transpose() * lambdas[static_cast<size_t>(i)];
      return acc;
    };
    auto cost = [&]() {
      double f = (params.xi * w - total_wrench()).squaredNorm();
      for (const auto& l : lambdas) f += params.w_lambda * l.squaredNorm();
      for (const auto& l : lambdas) f -= nu * l[0];
      return f;
    };
    double f = cost();
    for (int it = 0; it < params.max_iterations; ++it)
    {
      const Vec6 residual = params.xi * w - total_wrench();
      std::vector<Vec3> grads(static_cast<size_t>(K));
      for (int i = 0; i < K; ++i)
      {
        grads[static_cast<size_t>(i)] = -2.0 * (maps[static_cast<size_t>(i)] * residual) +
                                        2.0 * params.w_lambda * lambdas[static_cast<size_t>(i)];
        grads[static_cast<size_t>(i)][0] -= nu;
      }
      bool accepted = false;
      for (int bt = 0; bt < 30; ++bt)
      {
        std::vector<Vec3> trial(static_cast<size_t>(K));
        for (int i = 0; i < K; ++i)
        {
          trial[static_cast<size_t>(i)] = project_pyramid_box(
              lambdas[static_cast<size_t>(i)] - step * grads[static_cast<size_t>(i)], params.mu,
              params.lambda_max);
        }
        std::swap(trial, lambdas);
        const double f_trial = cost();
        if (f_trial <= f + 1e-15)
        {
          f = f_trial;
          accepted = true;
          step *= 1.2;
          break;
        }
        std::swap(trial, lambdas);
        step *= 0.5;
      }
      if (!accepted) break;
    }
    return f;
  };

  ForceClosureResult out;
  for (const Vec6& w : disturbances)
  {
    std::vector<Vec3> lambdas(static_cast<size_t>(K), Vec3::Zero());
    solve_cone_qp(w, 0.0, lambdas);
    auto normal_sum = [&]() {
      double s = 0.0;
      for (const auto& l : lambdas) s += l[0];
      return s;
    };
    if (normal_sum() < params.zeta - 1e-9)
    {
      // Bisect the multiplier of the minimum-normal-force constraint.
      auto probe_at = [&](double nu, std::vector<Vec3>& probe) {
        probe.assign(static_cast<size_t>(K), Vec3::Zero());
        solve_cone_qp(w, nu, probe);
        double s = 0.0;
        for (const auto& l : probe) s += l[0];
        return s;
      };
      double lo = 0.0, hi = 1.0;
      std::vector<Vec3> probe;
      while (probe_at(hi, probe) < params.zeta)
      {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e8) throw std::runtime_error("infeasible-grasp: constraint multiplier diverged");
      }
      lambdas = probe;
      for (int bisect = 0; bisect < 60; ++bisect)
      {
        const double mid = 0.5 * (lo + hi);
        if (probe_at(mid, probe) < params.zeta)
        {
          lo = mid;
        }
        else
        {
          hi = mid;
          lambdas = probe;
        }
        if (hi - lo < 1e-10 * (1.0 + hi)) break;
      }
      if (normal_sum() < params.zeta - 1e-6)
      {
        throw std::runtime_error("infeasible-grasp: minimum normal force unreachable");
      }
    }
    // Cost without the multiplier term.
    Vec6 acc = Vec6::Zero();
    for (int i = 0; i < K; ++i) acc += maps[static_cast<size_t>(i)].transpose() * lambdas[static_cast<size_t>(i)];
    double fj = (params.xi * w - acc).squaredNorm();
    for (const auto& l : lambdas) fj += params.w_lambda * l.squaredNorm();
    out.cost += fj;
    out.forces.push_back(lambdas);
  }
  return out;
}

}  // namespace scsp
