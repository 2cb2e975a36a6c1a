#pragma once

// Test-only oracles, independent of the solver paths they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "scsp/cso.hpp"
#include "scsp/dynamics.hpp"

namespace scsp::oracle
{

// Exhaustive active-set enumeration for 0 <= x  perp  Hx + c >= 0.
// Tries subsets by ascending cardinality; returns the first KKT-consistent
// solution. Only for small m.
inline std::optional<VecX> lcp_enumerate(const MatX& H, const VecX& c, double tol = 1e-10)
{
  const int m = static_cast<int>(c.size());
  if (m > 20) return std::nullopt;  // 2^m blows up past this
  std::vector<uint32_t> masks;
  masks.reserve(1u << m);
  for (uint32_t mask = 0; mask < (1u << m); ++mask) masks.push_back(mask);
  std::sort(masks.begin(), masks.end(), [](uint32_t a, uint32_t b) {
    const int pa = __builtin_popcount(a), pb = __builtin_popcount(b);
    return pa != pb ? pa < pb : a < b;
  });

  const double scale = 1.0 + c.cwiseAbs().maxCoeff();
  for (uint32_t mask : masks)
  {
    std::vector<int> active;
    for (int i = 0; i < m; ++i)
    {
      if (mask & (1u << i)) active.push_back(i);
    }
    VecX x = VecX::Zero(m);
    if (!active.empty())
    {
      MatX Ha(active.size(), active.size());
      VecX ca(active.size());
      for (size_t a = 0; a < active.size(); ++a)
      {
        ca[static_cast<Eigen::Index>(a)] = c[active[a]];
        for (size_t b = 0; b < active.size(); ++b)
        {
          Ha(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
              H(active[a], active[b]);
        }
      }
      const VecX xa = Ha.fullPivLu().solve(-ca);
      if (((Ha * xa + ca).cwiseAbs().maxCoeff()) > tol * scale) continue;  // singular block
      bool nonneg = true;
      for (Eigen::Index a = 0; a < xa.size(); ++a)
      {
        if (xa[a] < -tol * scale) nonneg = false;
      }
      if (!nonneg) continue;
      for (size_t a = 0; a < active.size(); ++a)
      {
        x[active[a]] = std::max(0.0, xa[static_cast<Eigen::Index>(a)]);
      }
    }
    const VecX slack = H * x + c;
    if (slack.minCoeff() < -tol * scale) continue;
    return x;
  }
  return std::nullopt;
}

// Exact-step oracle: rebuilds the dual data of the contact QP and
// enumerates active sets.
struct ExactOracle
{
  VecX impulses;
  VecV velocity;
  bool found{false};
};

inline ExactOracle exact_step_oracle(const WorldState& state,
                                     const std::vector<ContactPoint>& contacts, const Vec3& u,
                                     const SystemParams& params)
{
  const AssembledSystem sys = assemble_system(state, contacts, u, params);
  const double h = params.h;
  ExactOracle out;
  if (sys.Jt.rows() == 0)
  {
    out.impulses = VecX();
    out.velocity = sys.Qinv * (sys.b / h);
    out.found = true;
    return out;
  }
  MatX H = sys.Jt * sys.Qinv * sys.Jt.transpose() / (h * h);
  H.diagonal().array() += params.contact_reg / (h * h);
  const VecX c = (sys.Jt * sys.Qinv * sys.b + sys.phit) / h;
  const auto beta = lcp_enumerate(H, c);
  if (!beta) return out;
  out.impulses = *beta;
  out.velocity = sys.Qinv * (sys.b / h + sys.Jt.transpose() * (*beta) / (h * h));
  out.found = true;
  return out;
}

// Linear-scan nearest valid sample (ties to the lowest index).
inline int nearest_linear(const CandidateSet& set, const Vec3& q)
{
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < set.samples.size(); ++i)
  {
    if (!set.valid[i]) continue;
    const double d = (set.samples[i].p - q).squaredNorm();
    if (d < best_d)
    {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

// Dense grid search over the friction pyramid for the CSO inner problem.
struct GridSearch
{
  double cost{std::numeric_limits<double>::infinity()};
  Vec3 lambda{Vec3::Zero()};
};

inline GridSearch grid_search_force(const SurfaceSample& sample, const ScmFrozenScene& frozen,
                                    const WorldState& state, const CsoObjectiveSpec& spec,
                                    const SystemParams& sys, double pitch)
{
  const WrenchMap J_r = robot_wrench_map(sample, state.x_o);
  GridSearch best;
  const double mu = sys.mu_r;
  for (double n = 0.0; n <= sys.lambda_n_max + 1e-12; n += pitch)
  {
    const double cap = mu * n;
    for (double t1 = -cap; t1 <= cap + 1e-12; t1 += pitch)
    {
      for (double t2 = -cap; t2 <= cap + 1e-12; t2 += pitch)
      {
        const Vec3 lambda(n, t1, t2);
        const ScmPrediction pred = scm_predict(frozen, state, J_r.transpose() * lambda);
        const double cost = cso_objective(pred.x_next, state.x_o, spec);
        if (cost < best.cost)
        {
          best.cost = cost;
          best.lambda = lambda;
        }
      }
    }
  }
  return best;
}

// Random synthetic contact scenes shared by the dynamics tests.
struct RandomScene
{
  WorldState state;
  std::vector<ContactPoint> contacts;
  SystemParams params;
  Vec3 u{Vec3::Zero()};
};

inline RandomScene random_contact_scene(uint64_t seed, int max_contacts, bool with_robot)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  RandomScene scene;

  scene.params = make_params(0.05 + 0.3 * uni(rng), 1e-4 + 1e-3 * uni(rng));
  scene.params.mu_env = 0.2 + 0.5 * uni(rng);
  scene.params.mu_r = 0.2 + 0.5 * uni(rng);
  scene.params.K_r = Mat3::Identity() * (100.0 + 400.0 * uni(rng));

  scene.state.x_o.p = Vec3(0.0, 0.0, 0.03 + 0.02 * uni(rng));
  scene.state.x_o.q = quat_exp(Vec3(0.2 * uni(rng), 0.2 * uni(rng), 2.0 * M_PI * uni(rng)));
  scene.state.p_ee = scene.state.x_o.p + Vec3(0.06 * (2 * uni(rng) - 1),
                                              0.06 * (2 * uni(rng) - 1), 0.04 * uni(rng));

  const int n_env = 1 + static_cast<int>(uni(rng) * max_contacts) % max_contacts;
  for (int i = 0; i < n_env; ++i)
  {
    ContactPoint c;
    c.p = Vec3(-0.05 + 0.1 * uni(rng), -0.05 + 0.1 * uni(rng), 0.0);
    c.n = Vec3::UnitZ();
    c.t1 = Vec3::UnitX();
    c.t2 = Vec3::UnitY();
    c.phi = -0.002 + 0.006 * uni(rng);
    c.pair = ContactPair::EnvObject;
    scene.contacts.push_back(c);
  }
  if (with_robot && uni(rng) < 0.7 && static_cast<int>(scene.contacts.size()) < max_contacts)
  {
    ContactPoint c;
    Vec3 dir(2 * uni(rng) - 1, 2 * uni(rng) - 1, 0.6 * (2 * uni(rng) - 1));
    if (dir.norm() < 1e-6) dir = Vec3::UnitX();
    c.n = dir.normalized();
    c.p = scene.state.x_o.p - 0.04 * c.n;
    SurfaceSample frame;
    frame.n = c.n;
    build_frame(frame);
    c.t1 = frame.t1;
    c.t2 = frame.t2;
    c.phi = -0.002 + 0.006 * uni(rng);
    c.pair = ContactPair::RobotObject;
    scene.contacts.push_back(c);
  }
  scene.u = Vec3(0.01 * (2 * uni(rng) - 1), 0.01 * (2 * uni(rng) - 1), 0.01 * (2 * uni(rng) - 1));
  return scene;
}

}  // namespace scsp::oracle
