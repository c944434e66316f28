// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0
//
// On-disk dataset layout: JSON indices naming every scan and camera frame,
// shared between the simulator (writer) and the pipeline tools (readers).
//
// A dataset directory looks like:
//   rig.json                     camera-to-rig-body extrinsics
//   imu.csv                      t,ax,ay,az,gx,gy,gz
//   scans/index.json             LiDAR sweep index (this header)
//   scans/scan_000000.ply        one sweep, body frame, per-point time
//   depth/index.json             camera frame index (this header)
//   depth/front_000012.png       16-bit depth in millimeters
//   streams/front.txt            per-camera visual odometry, TUM format
//   groundtruth/trajectory.txt   body pose in world, TUM format
//   groundtruth/rig_trajectory.txt  rig-body (front optical) pose in world
//   groundtruth/mount.json       front optical frame in the robot body frame
//   groundtruth/surface.ply      dense surface sampling of the scene

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hallmap/sensor_data.hpp"

namespace hallmap {

/// One LiDAR sweep on disk.
struct ScanIndexEntry {
  std::string file;  ///< relative to the index's directory
  double t0 = 0.0;   ///< sweep start, seconds
  double t1 = 0.0;   ///< sweep end, seconds
};

struct ScanIndex {
  double sweep_duration = 0.0;
  std::vector<ScanIndexEntry> scans;  ///< ordered by t0
};

ScanIndex load_scan_index(const std::filesystem::path& path);
void save_scan_index(const ScanIndex& index, const std::filesystem::path& path);

/// Camera description in a frame index.
struct DatasetCamera {
  CameraIntrinsics intrinsics;
  double max_depth = 0.0;  ///< meters; depths beyond are invalid
};

/// One camera frame (depth image optional: only stored for keyframes).
struct FrameRecord {
  std::string camera;
  std::size_t index = 0;  ///< per-camera frame number
  double t = 0.0;
  double flow_px = 0.0;   ///< mean pixel displacement since previous frame
  std::string depth_file; ///< relative to the index's directory; "" = none
};

struct FrameIndex {
  std::map<std::string, DatasetCamera> cameras;
  std::vector<FrameRecord> frames;  ///< grouped by camera, time-ordered
};

FrameIndex load_frame_index(const std::filesystem::path& path);
void save_frame_index(const FrameIndex& index,
                      const std::filesystem::path& path);

/// Fixed mounting of the rig body (front camera optical frame) on the
/// robot body, stored as {"q": [w,x,y,z], "t": [x,y,z]}.
PoseSE3 load_mount(const std::filesystem::path& path);
void save_mount(const PoseSE3& front_in_robot,
                const std::filesystem::path& path);

}  // namespace hallmap
