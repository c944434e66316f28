// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include "hallmap/rig_fusion.hpp"

#include <algorithm>
#include <cmath>

#include "hallmap/errors.hpp"

namespace hallmap {

std::vector<std::size_t> keyframe_select(const std::vector<double>& flow_px,
                                         double tau_flow) {
  if (!(tau_flow > 0)) {
    throw std::invalid_argument("keyframe_select: tau_flow must be positive");
  }
  std::vector<std::size_t> selected;
  if (flow_px.empty()) return selected;
  selected.push_back(0);
  double accumulated = 0.0;
  for (std::size_t i = 1; i < flow_px.size(); ++i) {
    accumulated += flow_px[i];
    if (accumulated >= tau_flow) {
      selected.push_back(i);
      accumulated = 0.0;
    }
  }
  return selected;
}

PoseSE3 to_body_frame(const CameraKeyframe& kf, const RigCalibration& rig) {
  return kf.pose_cam_in_stream * rig.extrinsic(kf.camera_id).inverse();
}

PointCloud backproject_depth(const DepthMap& depth,
                             const CameraIntrinsics& intrinsics,
                             int pixel_stride) {
  if (pixel_stride < 1) {
    throw std::invalid_argument(
        "backproject_depth: pixel_stride must be >= 1");
  }
  PointCloud cloud;
  cloud.points.reserve(
      (depth.width / pixel_stride + 1) * (depth.height / pixel_stride + 1));
  for (int v = 0; v < depth.height; v += pixel_stride) {
    for (int u = 0; u < depth.width; u += pixel_stride) {
      const float d = depth.at(u, v);
      if (!(d > 0.0f) || !std::isfinite(d)) continue;
      const double z = static_cast<double>(d);
      cloud.points.emplace_back((u - intrinsics.cx) * z / intrinsics.fx,
                                (v - intrinsics.cy) * z / intrinsics.fy, z);
    }
  }
  return cloud;
}

}  // namespace hallmap
