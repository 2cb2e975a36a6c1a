#include "scsp/dynamics.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace scsp
{

void SystemParams::validate() const
{
  if (!M_o.isApprox(M_o.transpose(), 1e-9))
  {
    throw std::invalid_argument("M_o must be symmetric");
  }
  Eigen::LDLT<Mat6> mo(M_o);
  if (mo.info() != Eigen::Success || (mo.vectorD().array() <= 0.0).any())
  {
    throw std::invalid_argument("M_o must be positive definite");
  }
  Eigen::LDLT<Mat3> kr(K_r);
  if (kr.info() != Eigen::Success || (kr.vectorD().array() <= 0.0).any())
  {
    throw std::invalid_argument("K_r must be positive definite");
  }
  if (h <= 0.0) throw std::invalid_argument("h must be positive");
  if (n_d < 4 || n_d % 2 != 0) throw std::invalid_argument("n_d must be even and >= 4");
  if (mu_env < 0.0 || mu_r < 0.0) throw std::invalid_argument("friction must be >= 0");
  if (contact_reg <= 0.0) throw std::invalid_argument("contact regularization must be > 0");
  if (epsilon_mass <= 0.0) throw std::invalid_argument("epsilon_mass must be > 0");
}

SystemParams make_params(double m, double i)
{
  SystemParams p;
  p.M_o = Mat6::Identity();
  p.M_o.topLeftCorner<3, 3>() *= m;
  p.M_o.bottomRightCorner<3, 3>() *= i;
  p.object_mass = m;
  return p;
}

ContactRows contact_rows(const ContactPoint& c, const Vec3& object_center)
{
  const Vec3 r = c.p - object_center;
  ContactRows rows;
  auto fill = [&](const Vec3& dir, RowV& row) {
    row.setZero();
    if (c.pair == ContactPair::EnvRobot)
    {
      row.segment<3>(6) = dir.transpose();
      return;
    }
    row.segment<3>(0) = dir.transpose();
    row.segment<3>(3) = r.cross(dir).transpose();
    if (c.pair == ContactPair::RobotObject)
    {
      row.segment<3>(6) = -dir.transpose();
    }
  };
  fill(c.n, rows.jn);
  fill(c.t1, rows.jt1);
  fill(c.t2, rows.jt2);
  return rows;
}

std::vector<ContactPoint> detect_contacts(const WorldState& state, const TriMesh& mesh,
                                          const CandidateSet& candidates,
                                          const SystemParams& params)
{
  std::vector<ContactPoint> contacts;

  // Environment: candidate surface points against the ground plane z = 0.
  for (size_t i = 0; i < candidates.samples.size(); ++i)
  {
    const Vec3 pw = state.x_o.transform(candidates.samples[i].p);
    if (pw.z() < params.contact_margin)
    {
      ContactPoint c;
      c.p = pw;
      c.n = Vec3::UnitZ();
      c.t1 = Vec3::UnitX();
      c.t2 = Vec3::UnitY();
      c.phi = pw.z();
      c.pair = ContactPair::EnvObject;
      c.source_id = static_cast<int>(i);
      contacts.push_back(c);
    }
  }

  // Fingertip sphere against the ground plane.
  const double ground_gap = state.p_ee.z() - params.fingertip_radius;
  if (ground_gap < params.contact_margin)
  {
    ContactPoint c;
    c.p = Vec3(state.p_ee.x(), state.p_ee.y(), 0.0);
    c.n = Vec3::UnitZ();
    c.t1 = Vec3::UnitX();
    c.t2 = Vec3::UnitY();
    c.phi = ground_gap;
    c.pair = ContactPair::EnvRobot;
    contacts.push_back(c);
  }

  // Robot: sphere fingertip against the mesh, deepest proximity point only.
  const Vec3 center_local = state.x_o.q.conjugate() * (state.p_ee - state.x_o.p);
  const MeshProximity prox = closest_point_on_mesh(mesh, center_local);
  const bool inside = mesh.watertight && mesh_contains(mesh, center_local);
  const double phi = (inside ? -prox.distance : prox.distance) - params.fingertip_radius;
  if (phi < params.contact_margin)
  {
    ContactPoint c;
    c.p = state.x_o.transform(prox.point);
    Vec3 dir = prox.point - center_local;  // toward the object surface
    if (inside) dir = -dir;
    if (dir.norm() > 1e-9)
    {
      c.n = (state.x_o.q * dir).normalized();
    }
    else
    {
      c.n = -(state.x_o.q * mesh.face_normals[static_cast<size_t>(prox.face_id)]);
    }
    SurfaceSample frame;
    frame.n = c.n;
    build_frame(frame);
    c.t1 = frame.t1;
    c.t2 = frame.t2;
    c.phi = phi;
    c.pair = ContactPair::RobotObject;
    c.source_id = prox.face_id;
    contacts.push_back(c);
  }
  return contacts;
}

AssembledSystem assemble_system(const WorldState& state, const std::vector<ContactPoint>& contacts,
                                const Vec3& u, const SystemParams& params)
{
  params.validate();
  AssembledSystem sys;
  const double h = params.h;
  sys.Q.topLeftCorner<6, 6>() = params.effective_mass() / (h * h);
  sys.Q.bottomRightCorner<3, 3>() = params.K_r;
  sys.Qinv.setZero();
  sys.Qinv.topLeftCorner<6, 6>() = (h * h) * params.effective_mass().inverse();
  sys.Qinv.bottomRightCorner<3, 3>() = params.K_r.inverse();
  sys.b.segment<6>(0) = params.gravity_wrench();
  sys.b.segment<3>(6) = params.K_r * u;  // tau_r = 0
  sys.contacts = contacts;
  sys.rows_per_contact = params.n_d;

  const int m = static_cast<int>(contacts.size()) * params.n_d;
  sys.Jt.resize(m, kNumVel);
  sys.phit.resize(m);
  int row = 0;
  for (const auto& c : contacts)
  {
    const ContactRows rows = contact_rows(c, state.x_o.p);
    const double mu = c.pair == ContactPair::EnvObject ? params.mu_env : params.mu_r;
    for (int j = 0; j < params.n_d; ++j)
    {
      const double theta = 2.0 * M_PI * j / params.n_d;
      const RowV tangent = std::cos(theta) * rows.jt1 + std::sin(theta) * rows.jt2;
      sys.Jt.row(row) = rows.jn - mu * tangent;
      sys.phit[row] = c.phi;
      ++row;
    }
  }
  return sys;
}

namespace
{

// Regularized primal in v-space: F(v) = 1/2 h^2 v'Qv - h v'b
// + (h^2/2R) sum max(0, -(Jv + phi/h))^2, whose minimizer reproduces the
// R-regularized dual solution with beta = (h^2/R) max(0, -(Jv + phi/h)).
// Semismooth Newton identifies the active set in a few 9x9 solves; the
// result seeds the exact dual refinement.
VecX primal_newton_seed(const AssembledSystem& sys, const SystemParams& params)
{
  const double h = params.h;
  const double weight = h * h / params.contact_reg;
  const MatX& A = sys.Jt;
  const VecX base = sys.phit / h;

  VecV v = sys.Qinv * (sys.b / h);
  const MatV Qh = (h * h) * sys.Q;
  const VecV hb = h * sys.b;

  for (int iter = 0; iter < 60; ++iter)
  {
    const VecX s = A * v + base;
    VecV grad = Qh * v - hb;
    MatV hess = Qh;
    for (Eigen::Index i = 0; i < s.size(); ++i)
    {
      if (s[i] < 0.0)
      {
        grad += weight * s[i] * A.row(i).transpose();
        hess += weight * (A.row(i).transpose() * A.row(i));
      }
    }
    const double scale = 1.0 + hb.cwiseAbs().maxCoeff();
    if (grad.cwiseAbs().maxCoeff() <= 1e-11 * scale) break;
    const VecV dv = hess.ldlt().solve(-grad);
    if (!dv.allFinite()) break;

    auto value = [&](const VecV& vv) {
      const VecX ss = A * vv + base;
      double f = 0.5 * vv.dot(Qh * vv) - hb.dot(vv);
      for (Eigen::Index i = 0; i < ss.size(); ++i)
      {
        if (ss[i] < 0.0) f += 0.5 * weight * ss[i] * ss[i];
      }
      return f;
    };
    const double f0 = value(v);
    double t = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 30; ++bt)
    {
      const VecV trial = v + t * dv;
      if (value(trial) <= f0 + 1e-12 * std::abs(f0))
      {
        v = trial;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
  }

  const VecX s = A * v + base;
  return (-weight * s.array()).max(0.0).matrix();
}

VecV velocity_from_impulses(const AssembledSystem& sys, const VecX& beta, double h)
{
  VecV v = sys.Qinv * (sys.b / h);
  if (beta.size() > 0)
  {
    v += sys.Qinv * (sys.Jt.transpose() * beta) / (h * h);
  }
  return v;
}

WorldState integrate(const WorldState& state, const VecV& v, double h)
{
  WorldState out = state;
  out.x_o = integrate_pose(state.x_o, v.head<6>(), h);
  out.p_ee = state.p_ee + h * v.tail<3>();
  out.v_o = v.head<6>();
  out.v_ee = v.tail<3>();
  return out;
}

}  // namespace

StepResult step_exact_on(const WorldState& state, const Vec3& u,
                         const std::vector<ContactPoint>& contacts, const SystemParams& params,
                         const VecX& warm_start)
{
  const AssembledSystem sys = assemble_system(state, contacts, u, params);
  const double h = params.h;
  StepResult result;

  const Eigen::Index m = sys.Jt.rows();
  if (m == 0)
  {
    result.velocity = sys.Qinv * (sys.b / h);
    result.state = integrate(state, result.velocity, h);
    result.impulses = VecX();
    result.kkt = KktReport{0.0, 0.0, 0.0, 0, true};
    return result;
  }

  // Dual of the primal QP: min (1/2h^2) b'(W+R)b + (1/h) g'b over beta >= 0,
  // with W = J Q^-1 J', g = J Q^-1 b + phi. The multiplier is the contact
  // impulse and the dual gradient is the (regularized) constraint slack.
  const MatX JQinv = sys.Jt * sys.Qinv;
  MatX H = (JQinv * sys.Jt.transpose()) / (h * h);
  H.diagonal().array() += params.contact_reg / (h * h);
  const VecX c = (JQinv * sys.b + sys.phit) / h;

  NnQpOptions opts;
  opts.max_iterations = 2000;
  opts.tolerance = 1e-12;
  opts.block_size = params.n_d;
  VecX warm = warm_start;
  if (warm.size() != m)
  {
    warm = primal_newton_seed(sys, params);
  }
  NnQpResult qp = solve_nonneg_qp(H, c, warm, opts);
  if (!qp.converged)
  {
    // The Newton seed usually resolves scenes the first pass cannot.
    const NnQpResult retry = solve_nonneg_qp(H, c, primal_newton_seed(sys, params), opts);
    if (retry.kkt_residual < qp.kkt_residual) qp = retry;
  }
  if (!qp.converged)
  {
    if (std::getenv("SCSP_QP_DUMP") != nullptr)
    {
      std::ofstream dump("/tmp/scsp_qp_dump.txt");
      dump.precision(17);
      dump << H.rows() << "\n" << H << "\n" << c.transpose() << "\n";
    }
    throw std::runtime_error("contact QP failed to converge (kkt residual " +
                             std::to_string(qp.kkt_residual) + ")");
  }

  result.impulses = qp.x;
  result.velocity = velocity_from_impulses(sys, qp.x, h);
  result.state = integrate(state, result.velocity, h);

  const VecX slack = H * qp.x + c;  // equals J v + phi/h
  result.kkt.min_slack = slack.minCoeff();
  result.kkt.max_complementarity = (qp.x.array() * slack.array()).abs().maxCoeff();
  result.kkt.min_impulse = qp.x.minCoeff();
  result.kkt.iterations = qp.iterations;
  result.kkt.solver_ok = true;
  return result;
}

StepResult step_exact(const WorldState& state, const Vec3& u, const TriMesh& mesh,
                      const CandidateSet& candidates, const SystemParams& params,
                      const VecX& warm_start)
{
  return step_exact_on(state, u, detect_contacts(state, mesh, candidates, params), params,
                       warm_start);
}

CfStepResult step_cf(const WorldState& state, const Vec3& u,
                     const std::vector<ContactPoint>& contacts, const SystemParams& params)
{
  const AssembledSystem sys = assemble_system(state, contacts, u, params);
  const double h = params.h;
  CfStepResult result;

  VecX beta;
  if (sys.Jt.rows() > 0)
  {
    const MatX JQinv = sys.Jt * sys.Qinv;
    const VecX pre = JQinv * sys.b + sys.phit;
    VecX diag = (JQinv * sys.Jt.transpose()).diagonal();
    diag.array() += params.contact_reg;
    beta = (-h * pre.array() / diag.array()).max(0.0).matrix();
  }
  result.impulses = beta;
  result.velocity_change = velocity_from_impulses(sys, beta, h);

  const VecV v_prev = (VecV() << state.v_o, state.v_ee).finished();
  const VecV v_new = v_prev + result.velocity_change;
  result.state = integrate(state, v_new, h);
  if (!result.state.x_o.p.allFinite() || !result.state.p_ee.allFinite())
  {
    throw std::runtime_error("complementarity-free step diverged");
  }
  return result;
}

double normal_impulse(const AssembledSystem& sys, const VecX& beta, int contact_index)
{
  const int nd = sys.rows_per_contact;
  return beta.segment(contact_index * nd, nd).sum();
}

double min_signed_distance(const WorldState& state, const TriMesh& mesh,
                           const CandidateSet& candidates, const SystemParams& params)
{
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& s : candidates.samples)
  {
    lowest = std::min(lowest, state.x_o.transform(s.p).z());
  }
  const Vec3 center_local = state.x_o.q.conjugate() * (state.p_ee - state.x_o.p);
  const MeshProximity prox = closest_point_on_mesh(mesh, center_local);
  const bool inside = mesh.watertight && mesh_contains(mesh, center_local);
  const double phi = (inside ? -prox.distance : prox.distance) - params.fingertip_radius;
  return std::min({lowest, phi, state.p_ee.z() - params.fingertip_radius});
}

}  // namespace scsp
