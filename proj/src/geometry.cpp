// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include "hallmap/geometry.hpp"

#include <cmath>

namespace hallmap {

namespace {
constexpr double kSmallAngle = 1e-8;
constexpr double kLogSingularityMargin = 1e-6;
}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return s;
}

double PoseSE3::rotation_angle_to(const PoseSE3& other) const {
  // atan2 form: accurate for tiny angles, where acos of the dot product
  // loses half the significant digits.
  const Quat dq = rotation.conjugate() * other.rotation;
  return 2.0 * std::atan2(dq.vec().norm(), std::abs(dq.w()));
}

bool PoseSE3::is_approx(const PoseSE3& other, double tol) const {
  return rotation_angle_to(other) <= tol && translation_distance_to(other) <= tol;
}

PoseSE3 se3_exp(const Vec6& twist) {
  const Vec3 omega = twist.head<3>();
  const Vec3 v = twist.tail<3>();
  const double theta = omega.norm();

  Quat q;
  Mat3 big_v;
  const Mat3 omega_hat = skew(omega);
  if (theta < kSmallAngle) {
    q = Quat(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    q.normalize();
    big_v = Mat3::Identity() + 0.5 * omega_hat + omega_hat * omega_hat / 6.0;
  } else {
    q = Quat(Eigen::AngleAxisd(theta, omega / theta));
    const double a = (1.0 - std::cos(theta)) / (theta * theta);
    const double b = (theta - std::sin(theta)) / (theta * theta * theta);
    big_v = Mat3::Identity() + a * omega_hat + b * omega_hat * omega_hat;
  }
  return PoseSE3(q, big_v * v);
}

Vec6 se3_log(const PoseSE3& p) {
  Quat q = p.rotation.normalized();
  if (q.w() < 0.0) q.coeffs() *= -1.0;  // shortest representative
  const double sin_half = q.vec().norm();
  const double cos_half = q.w();
  const double theta = 2.0 * std::atan2(sin_half, cos_half);
  if (theta >= M_PI - kLogSingularityMargin) {
    throw DegenerateInputError("se3_log: rotation angle too close to pi");
  }

  Vec3 omega;
  if (theta < kSmallAngle) {
    omega = 2.0 * q.vec();
  } else {
    omega = q.vec() * (theta / sin_half);
  }

  const Mat3 omega_hat = skew(omega);
  Mat3 v_inv;
  if (theta < kSmallAngle) {
    v_inv = Mat3::Identity() - 0.5 * omega_hat + omega_hat * omega_hat / 12.0;
  } else {
    const double c = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) /
                     (theta * theta);
    v_inv = Mat3::Identity() - 0.5 * omega_hat + c * omega_hat * omega_hat;
  }

  Vec6 twist;
  twist.head<3>() = omega;
  twist.tail<3>() = v_inv * p.translation;
  return twist;
}

PoseSE3 interpolate_pose(const PoseSE3& p0, const PoseSE3& p1, double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::invalid_argument("interpolate_pose: t must lie in [0, 1]");
  }
  Quat q = p0.rotation.slerp(t, p1.rotation);
  q.normalize();
  return PoseSE3(q, (1.0 - t) * p0.translation + t * p1.translation);
}

Quat rotation_between(const Vec3& from, const Vec3& to) {
  Quat q = Quat::FromTwoVectors(from, to);
  q.normalize();
  return q;
}

}  // namespace hallmap
