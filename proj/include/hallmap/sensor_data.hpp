// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hallmap/geometry.hpp"
#include "hallmap/point_cloud.hpp"

namespace hallmap {

struct TrajectoryEntry {
  Timestamp t = 0.0;
  PoseSE3 pose;
};

/// Timestamped pose sequence; timestamps strictly increasing.
using Trajectory = std::vector<TrajectoryEntry>;

/// Interpolated pose at time t (clamped to the trajectory's span).
/// Throws DegenerateInputError on an empty trajectory.
PoseSE3 trajectory_pose_at(const Trajectory& traj, Timestamp t);

struct ImuSample {
  Timestamp t = 0.0;
  Vec3 accel = Vec3::Zero();  ///< specific force, m/s² (includes gravity)
  Vec3 gyro = Vec3::Zero();   ///< body angular rate, rad/s
};

/// One LiDAR sweep. Per-point timestamps are absolute and lie within
/// [sweep_start, sweep_end]; points are in the sensor body frame.
struct ScanFrame {
  PointCloud points;
  Timestamp sweep_start = 0.0;
  Timestamp sweep_end = 0.0;

  /// Throws DegenerateInputError when timestamps are missing or fall
  /// outside the sweep interval.
  void validate() const;
};

/// Dense depth image: depth along the optical axis in meters, row-major,
/// 0 marks an invalid pixel.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> depth;

  float at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  float& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }
  void resize(int w, int h) {
    width = w;
    height = h;
    depth.assign(static_cast<std::size_t>(w) * h, 0.0f);
  }
};

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;  ///< focal lengths, pixels
  double cx = 0.0, cy = 0.0;  ///< principal point, pixels
  int width = 0, height = 0;
};

/// Camera-to-body extrinsics keyed by camera id. The body frame is the
/// front camera's optical frame, so the "front" entry is the identity.
struct RigCalibration {
  std::map<std::string, PoseSE3> camera_to_body;

  bool has(const std::string& id) const { return camera_to_body.count(id) > 0; }
  const PoseSE3& extrinsic(const std::string& id) const;

  /// Throws ConfigError when "front" is absent or not identity within tol.
  void validate(double tol = 1e-9) const;
};

}  // namespace hallmap
