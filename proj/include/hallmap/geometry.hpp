// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "hallmap/errors.hpp"

namespace hallmap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Epoch-relative seconds. Streams keep these strictly increasing.
using Timestamp = double;

Mat3 skew(const Vec3& v);

/// Rigid body transform. Rotation is stored as a unit quaternion and is
/// renormalized after every composition so long pipelines cannot drift.
struct PoseSE3 {
  Quat rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 translation{0.0, 0.0, 0.0};

  PoseSE3() = default;
  PoseSE3(const Quat& q, const Vec3& t) : rotation(q), translation(t) {}

  static PoseSE3 identity() { return PoseSE3(); }

  static PoseSE3 from_matrix(const Mat3& r, const Vec3& t) {
    return PoseSE3(Quat(r), t);
  }

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }

  PoseSE3 inverse() const {
    Quat qi = rotation.conjugate();
    return PoseSE3(qi, -(qi * translation));
  }

  PoseSE3 operator*(const PoseSE3& other) const {
    Quat q = rotation * other.rotation;
    q.normalize();
    return PoseSE3(q, rotation * other.translation + translation);
  }

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }

  /// Rotation angle in radians to `other`, plus translation distance.
  double rotation_angle_to(const PoseSE3& other) const;
  double translation_distance_to(const PoseSE3& other) const {
    return (translation - other.translation).norm();
  }

  bool is_approx(const PoseSE3& other, double tol) const;
};

inline PoseSE3 se3_compose(const PoseSE3& a, const PoseSE3& b) { return a * b; }

/// Exponential map. Twist ordering is (rotation, translation):
/// twist = (wx, wy, wz, vx, vy, vz).
PoseSE3 se3_exp(const Vec6& twist);

/// Logarithm map, defined for rotation angles below pi.
/// Throws DegenerateInputError within 1e-6 of pi.
Vec6 se3_log(const PoseSE3& p);

/// Linear translation, shortest-arc slerp rotation. t must lie in [0, 1].
PoseSE3 interpolate_pose(const PoseSE3& p0, const PoseSE3& p1, double t);

/// Similarity transform: x -> scale * R * x + t. scale is strictly positive.
struct Sim3Transform {
  double scale{1.0};
  Quat rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 translation{0.0, 0.0, 0.0};

  Sim3Transform() = default;
  Sim3Transform(double s, const Quat& q, const Vec3& t)
      : scale(s), rotation(q), translation(t) {
    if (!(scale > 0.0)) throw DegenerateInputError("Sim3 scale must be positive");
  }

  static Sim3Transform identity() { return Sim3Transform(); }
  static Sim3Transform from_se3(const PoseSE3& p) {
    return Sim3Transform(1.0, p.rotation, p.translation);
  }

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }

  Sim3Transform inverse() const {
    Quat qi = rotation.conjugate();
    return Sim3Transform(1.0 / scale, qi, -(qi * translation) / scale);
  }

  Sim3Transform operator*(const Sim3Transform& other) const {
    Quat q = rotation * other.rotation;
    q.normalize();
    return Sim3Transform(scale * other.scale, q,
                         scale * (rotation * other.translation) + translation);
  }

  /// Group action on a rigid pose: rotations compose, translation is scaled.
  PoseSE3 apply_to_pose(const PoseSE3& p) const {
    Quat q = rotation * p.rotation;
    q.normalize();
    return PoseSE3(q, scale * (rotation * p.translation) + translation);
  }

  /// Rigid part only. Valid to call whatever the scale; the caller decides
  /// whether dropping it is meaningful.
  PoseSE3 se3() const { return PoseSE3(rotation, translation); }
};

/// Rotation by `angle` radians about +z (helper used across the toolkit).
inline Quat rot_z(double angle) {
  return Quat(Eigen::AngleAxisd(angle, Vec3::UnitZ()));
}
inline Quat rot_y(double angle) {
  return Quat(Eigen::AngleAxisd(angle, Vec3::UnitY()));
}
inline Quat rot_x(double angle) {
  return Quat(Eigen::AngleAxisd(angle, Vec3::UnitX()));
}

/// Minimal rotation taking unit vector `from` onto unit vector `to`.
Quat rotation_between(const Vec3& from, const Vec3& to);

/// Axis-aligned box; used for solid scene geometry and spatial filters.
struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  /// True when p lies in the (closed) box grown by `pad` on every side;
  /// a negative pad shrinks the box, testing the strict interior.
  bool contains(const Vec3& p, double pad = 0.0) const {
    return p.x() >= min.x() - pad && p.x() <= max.x() + pad &&
           p.y() >= min.y() - pad && p.y() <= max.y() + pad &&
           p.z() >= min.z() - pad && p.z() <= max.z() + pad;
  }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  bool intersects(const Box& other) const {
    return min.x() <= other.max.x() && other.min.x() <= max.x() &&
           min.y() <= other.max.y() && other.min.y() <= max.y() &&
           min.z() <= other.max.z() && other.min.z() <= max.z();
  }
};

}  // namespace hallmap
