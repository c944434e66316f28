// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include "hallmap/sensor_data.hpp"

#include <algorithm>
#include <cmath>

#include "hallmap/errors.hpp"

namespace hallmap {

PoseSE3 trajectory_pose_at(const Trajectory& traj, Timestamp t) {
  if (traj.empty()) {
    throw DegenerateInputError("pose lookup on an empty trajectory");
  }
  if (t <= traj.front().t) return traj.front().pose;
  if (t >= traj.back().t) return traj.back().pose;
  const auto it = std::lower_bound(
      traj.begin(), traj.end(), t,
      [](const TrajectoryEntry& e, Timestamp query) { return e.t < query; });
  const TrajectoryEntry& hi = *it;
  const TrajectoryEntry& lo = *(it - 1);
  const double span = hi.t - lo.t;
  const double u = span > 0.0 ? (t - lo.t) / span : 0.0;
  return interpolate_pose(lo.pose, hi.pose, u);
}

void ScanFrame::validate() const {
  points.validate();
  if (!points.has_times()) {
    throw DegenerateInputError("scan is missing per-point timestamps");
  }
  if (!(sweep_end >= sweep_start)) {
    throw DegenerateInputError("scan sweep interval is inverted");
  }
  for (std::size_t i = 0; i < points.times.size(); ++i) {
    const double t = points.times[i];
    if (t < sweep_start || t > sweep_end) {
      throw DegenerateInputError(
          "per-point timestamp outside sweep interval at point index " +
          std::to_string(i));
    }
  }
}

const PoseSE3& RigCalibration::extrinsic(const std::string& id) const {
  const auto it = camera_to_body.find(id);
  if (it == camera_to_body.end()) {
    throw ConfigError("unknown camera id '" + id + "' in rig calibration");
  }
  return it->second;
}

void RigCalibration::validate(double tol) const {
  const auto it = camera_to_body.find("front");
  if (it == camera_to_body.end()) {
    throw ConfigError("rig calibration is missing the 'front' camera");
  }
  const PoseSE3& front = it->second;
  const double angle =
      2.0 * std::atan2(front.rotation.vec().norm(), std::abs(front.rotation.w()));
  if (angle > tol || front.translation.norm() > tol) {
    throw ConfigError(
        "'front' extrinsic must be the identity (body frame is the front "
        "camera's optical frame)");
  }
}

}  // namespace hallmap
