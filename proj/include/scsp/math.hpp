#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace scsp
{

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;

inline Mat3 skew(const Vec3& v)
{
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

// Object pose: position + unit quaternion (renormalized after every update).
struct Pose
{
  Vec3 p{Vec3::Zero()};
  Quat q{Quat::Identity()};

  Vec3 transform(const Vec3& local) const { return p + q * local; }

  static Pose identity() { return Pose{}; }
};

// Quaternion exponential of a rotation vector theta (angle*axis).
inline Quat quat_exp(const Vec3& theta)
{
  const double angle = theta.norm();
  if (angle < 1e-12)
  {
    // First-order series; normalized below.
    Quat q(1.0, 0.5 * theta.x(), 0.5 * theta.y(), 0.5 * theta.z());
    q.normalize();
    return q;
  }
  const double half = 0.5 * angle;
  const Vec3 axis = theta / angle;
  const double s = std::sin(half);
  return Quat(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

// x_{k+1} = x_k (+) h*v with v = [linear; angular] expressed in world frame.
// The orientation update is q <- exp(h*omega) * q, renormalized.
inline Pose integrate_pose(const Pose& x, const Vec6& v, double h)
{
  Pose out;
  out.p = x.p + h * v.head<3>();
  out.q = quat_exp(h * v.tail<3>()) * x.q;
  out.q.normalize();
  return out;
}

// Quaternion coefficients in (w, x, y, z) order; used for cost arithmetic
// where the scalar-first convention of the pose vector matters.
inline Vec4 quat_wxyz(const Quat& q)
{
  return Vec4(q.w(), q.x(), q.y(), q.z());
}

// 1 - (psi_a . psi_b)^2; double-cover safe, in [0, 1].
inline double quat_error(const Quat& a, const Quat& b)
{
  const double d = quat_wxyz(a).dot(quat_wxyz(b));
  return 1.0 - d * d;
}

// d/dtheta of the coefficients (w,x,y,z) of quat_exp(theta) * q, evaluated
// at a rotation vector theta. Exact except for the series branch near 0.
inline Eigen::Matrix<double, 4, 3> dquat_exp_mul(const Vec3& theta, const Quat& q)
{
  // E(theta) = [cos(a), sin(a)*u] with a = |theta|/2, u = theta/|theta|.
  // d w / d theta   = -0.5 sin(a) u^T
  // d vec / d theta = sin(a)/|theta| * I + (0.5 cos(a) - sin(a)/|theta|) u u^T
  const double angle = theta.norm();
  Mat3 dvec;
  Eigen::RowVector3d dw;
  if (angle < 1e-8)
  {
    dw = -0.25 * theta.transpose();
    dvec = 0.5 * Mat3::Identity();
  }
  else
  {
    const double a = 0.5 * angle;
    const Vec3 u = theta / angle;
    dw = -0.5 * std::sin(a) * u.transpose();
    dvec = (std::sin(a) / angle) * Mat3::Identity()
         + (0.5 * std::cos(a) - std::sin(a) / angle) * (u * u.transpose());
  }
  // Right-multiplication by fixed q: (E * q) coefficients are linear in E's.
  // For p = E*q (Hamilton product), with E = (ew, ev), q = (qw, qv):
  //   pw = ew*qw - ev.qv
  //   pv = ew*qv + qw*ev + ev x qv
  const double qw = q.w();
  const Vec3 qv(q.x(), q.y(), q.z());
  Eigen::Matrix<double, 4, 3> out;
  for (int k = 0; k < 3; ++k)
  {
    const double dew = dw(k);
    const Vec3 dev = dvec.col(k);
    out(0, k) = dew * qw - dev.dot(qv);
    out.block<3, 1>(1, k) = dew * qv + qw * dev + dev.cross(qv);
  }
  return out;
}

}  // namespace scsp
