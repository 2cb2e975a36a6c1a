#include "scsp/scm.hpp"

#include <cmath>

namespace scsp
{

namespace
{

double spectral_norm(const MatX& m)
{
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatX> eig(0.5 * (m + m.transpose()));
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

ScmFrozenScene freeze_scene(const WorldState& state, const std::vector<ContactPoint>& env_contacts,
                            const SystemParams& params)
{
  // Blocks use the (n, t1, t2) contact-frame rows; at a point contact they
  // are close to orthogonal, which is what makes the diagonal surrogate a
  // good per-block approximation.
  ScmFrozenScene frozen;
  frozen.h = params.h;
  frozen.Minv = params.effective_mass().inverse();
  frozen.tau_o = params.gravity_wrench();
  frozen.rows_per_contact = 3;
  frozen.n_env = static_cast<int>(env_contacts.size());

  MatX J_all(frozen.n_env * 3, 6);
  int row = 0;
  for (const auto& c : env_contacts)
  {
    const ContactRows rows = contact_rows(c, state.x_o.p);
    MatX J(3, 6);
    J.row(0) = rows.jn.head<6>();
    J.row(1) = rows.jt1.head<6>();
    J.row(2) = rows.jt2.head<6>();
    for (int j = 0; j < 3; ++j) J_all.row(row++) = J.row(j);
    MatX W = J * frozen.Minv * J.transpose();
    W.diagonal().array() += params.contact_reg;
    const double eps_reg = 1e-6 * W.trace() / 3.0;
    frozen.eps_reg = eps_reg;
    frozen.D.push_back(W.diagonal().array() + eps_reg);
    frozen.W_blocks.push_back(W);
    frozen.J_env.push_back(std::move(J));
  }

  if (frozen.n_env > 0)
  {
    frozen.W_full = J_all * frozen.Minv * J_all.transpose();
    frozen.W_full.diagonal().array() += params.contact_reg;
    MatX off = frozen.W_full;
    for (int i = 0; i < frozen.n_env; ++i)
    {
      off.block(i * 3, i * 3, 3, 3).setZero();
    }
    frozen.coupling_norm = spectral_norm(off);
  }
  return frozen;
}

std::vector<ContactPoint> select_support_contacts(const std::vector<ContactPoint>& env_contacts,
                                                  int max_points)
{
  // Block decoupling makes every frozen contact carry the full support
  // response, so a dense candidate-derived contact set over-supports by
  // its cardinality. Keep only the extreme corners of the contact patch
  // (engine-style manifold reduction); deterministic by construction.
  if (static_cast<int>(env_contacts.size()) <= max_points) return env_contacts;
  std::vector<size_t> picks;
  auto pick_extreme = [&](auto&& score) {
    size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < env_contacts.size(); ++i)
    {
      const double s = score(env_contacts[i].p);
      if (s > best_score)
      {
        best_score = s;
        best = i;
      }
    }
    for (size_t seen : picks)
    {
      if (seen == best) return;
    }
    picks.push_back(best);
  };
  pick_extreme([](const Vec3& p) { return p.x() + p.y(); });
  pick_extreme([](const Vec3& p) { return p.x() - p.y(); });
  pick_extreme([](const Vec3& p) { return -p.x() + p.y(); });
  pick_extreme([](const Vec3& p) { return -p.x() - p.y(); });
  std::vector<ContactPoint> out;
  for (size_t i : picks)
  {
    out.push_back(env_contacts[i]);
    if (static_cast<int>(out.size()) >= max_points) break;
  }
  return out;
}

std::vector<VecX> env_force(const ScmFrozenScene& frozen, const Vec6& applied_wrench)
{
  const Vec6 w = frozen.tau_o + applied_wrench;
  std::vector<VecX> forces;
  forces.reserve(static_cast<size_t>(frozen.n_env));
  for (int i = 0; i < frozen.n_env; ++i)
  {
    const VecX pre = frozen.J_env[static_cast<size_t>(i)] * (frozen.Minv * w);
    forces.push_back((-pre.array() / frozen.D[static_cast<size_t>(i)].array()).max(0.0).matrix());
  }
  return forces;
}

std::vector<std::vector<bool>> clamp_pattern(const ScmFrozenScene& frozen,
                                             const Vec6& applied_wrench)
{
  const Vec6 w = frozen.tau_o + applied_wrench;
  std::vector<std::vector<bool>> pattern;
  for (int i = 0; i < frozen.n_env; ++i)
  {
    const VecX pre = frozen.J_env[static_cast<size_t>(i)] * (frozen.Minv * w);
    std::vector<bool> active(static_cast<size_t>(pre.size()));
    for (Eigen::Index r = 0; r < pre.size(); ++r) active[static_cast<size_t>(r)] = pre[r] < 0.0;
    pattern.push_back(std::move(active));
  }
  return pattern;
}

Vec6 scm_velocity(const ScmFrozenScene& frozen, const Vec6& applied_wrench)
{
  const Vec6 w = frozen.tau_o + applied_wrench;
  Vec6 generalized = w;
  const auto forces = env_force(frozen, applied_wrench);
  for (int i = 0; i < frozen.n_env; ++i)
  {
    generalized += frozen.J_env[static_cast<size_t>(i)].transpose() * forces[static_cast<size_t>(i)];
  }
  // b_o = h*w and impulses h*lambda: the h factors combine to one.
  return frozen.h * (frozen.Minv * generalized);
}

ScmPrediction scm_predict(const ScmFrozenScene& frozen, const WorldState& state,
                          const Vec6& applied_wrench)
{
  ScmPrediction out;
  out.v_plus = scm_velocity(frozen, applied_wrench);
  out.x_next = integrate_pose(state.x_o, state.v_o + out.v_plus, frozen.h);
  return out;
}

WrenchMap robot_wrench_map_at(const Vec3& p_world, const Vec3& push_normal, const Vec3& t1,
                              const Vec3& t2, const Vec3& object_center)
{
  const Vec3 r = p_world - object_center;
  WrenchMap map;
  auto fill = [&](int row, const Vec3& dir) {
    map.block<1, 3>(row, 0) = dir.transpose();
    map.block<1, 3>(row, 3) = r.cross(dir).transpose();
  };
  fill(0, push_normal);
  fill(1, t1);
  fill(2, t2);
  return map;
}

WrenchMap robot_wrench_map(const SurfaceSample& sample, const Pose& pose)
{
  const Vec3 p_world = pose.transform(sample.p);
  return robot_wrench_map_at(p_world, pose.q * (-sample.n), pose.q * sample.t1,
                             pose.q * sample.t2, pose.p);
}

ScmGradient scm_gradient(const ScmFrozenScene& frozen, const WorldState& state,
                         const WrenchMap& J_r, const Vec3& lambda_r)
{
  const Vec6 w_r = J_r.transpose() * lambda_r;
  const Vec6 w = frozen.tau_o + w_r;

  // d v / d lambda = h * Minv * (J_r' + sum_i J_i' dlambda_env_i/dlambda),
  // with the clamp handled by active-row masking.
  Eigen::Matrix<double, 6, 3> coupling = J_r.transpose();
  for (int i = 0; i < frozen.n_env; ++i)
  {
    const MatX& J = frozen.J_env[static_cast<size_t>(i)];
    const VecX pre = J * (frozen.Minv * w);
    MatX denv = -(J * frozen.Minv * J_r.transpose());
    for (Eigen::Index r = 0; r < denv.rows(); ++r)
    {
      if (pre[r] < 0.0)
      {
        denv.row(r) /= frozen.D[static_cast<size_t>(i)][r];
      }
      else
      {
        denv.row(r).setZero();
      }
    }
    coupling += J.transpose() * denv;
  }

  ScmGradient grad;
  grad.dv_dlambda = frozen.h * (frozen.Minv * coupling);

  const Vec6 v_plus = scm_velocity(frozen, w_r);
  const Vec3 theta = frozen.h * (state.v_o.tail<3>() + v_plus.tail<3>());
  const Eigen::Matrix<double, 4, 3> dquat_dtheta = dquat_exp_mul(theta, state.x_o.q);

  grad.dx_dlambda.setZero();
  grad.dx_dlambda.topRows<3>() = frozen.h * grad.dv_dlambda.topRows<3>();
  grad.dx_dlambda.bottomRows<4>() = dquat_dtheta * (frozen.h * grad.dv_dlambda.bottomRows<3>());
  return grad;
}

}  // namespace scsp
