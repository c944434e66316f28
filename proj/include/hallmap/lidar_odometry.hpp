// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hallmap/geometry.hpp"
#include "hallmap/point_cloud.hpp"
#include "hallmap/registration.hpp"
#include "hallmap/sensor_data.hpp"

namespace hallmap {

/// Sliding-window lidar-inertial odometry: scans are adaptively
/// downsampled, deskewed under a per-sweep linear motion model, registered
/// point-to-plane against a keyframe map, and jointly refined over a short
/// time window with constant-velocity smoothness and IMU gravity residuals.
/// Keyframes are admitted on overlap/distance criteria and locally
/// re-aligned against their overlapping neighbors.

struct OdometryConfig {
  double horizon_s = 0.8;             ///< sliding-window span, seconds
  std::size_t target_points_per_scan = 2000;
  double keyframe_overlap_thresh = 0.7;  ///< admit keyframe below this
  double keyframe_dist_thresh = 0.5;     ///< meters; admit keyframe beyond
  double refine_overlap_thresh = 0.3;    ///< neighbor selection for refine
  double overlap_radius = 0.3;           ///< meters; overlap_ratio radius
  double gravity_weight = 1.0;           ///< weight of gravity residuals
  double motion_prior_weight = 1.0;      ///< constant-velocity smoothness
  double map_voxel = 0.05;               ///< meters; output map dedup voxel
  double corr_dist = 0.5;                ///< meters; refine correspondence gate
  double gravity_window_s = 1.0;         ///< seconds of IMU used per estimate

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// A map-building keyframe: its downsampled scan (body frame), the world
/// pose it is anchored at, and the gravity direction measured in the body
/// frame at capture time (unit norm).
struct LidarKeyframe {
  std::size_t id = 0;
  PoseSE3 pose;          ///< body in world
  PointCloud points;     ///< downsampled scan, body frame
  Vec3 gravity_dir = Vec3::UnitZ();  ///< unit, body frame
  Timestamp t = 0.0;     ///< sweep end time
};

/// Gravity direction in the body frame (unit vector pointing opposite to
/// gravitational acceleration, i.e. "up"), with a confidence in (0, 1]
/// that degrades when the platform is not quasi-static.
struct GravityEstimate {
  Vec3 direction = Vec3::UnitZ();
  double confidence = 0.0;
};

/// One scan held in the sliding window together with its boundary pose
/// estimates (body in world at sweep start / end) and the gravity
/// measurement taken near its sweep end.
struct WindowEntry {
  ScanFrame scan;  ///< downsampled, body frame, per-point timestamps
  PoseSE3 pose_start;
  PoseSE3 pose_end;
  GravityEstimate gravity;
  /// Body rotation across the sweep from gyro integration, when IMU data
  /// covered the interval. Deskew uses it in place of the estimated
  /// relative rotation: the measurement cannot be warped by pose errors.
  std::optional<Quat> sweep_rot;
};

/// Time-bounded scan window. Pushing a new entry evicts old ones until
/// newest sweep_end minus oldest sweep_start fits the horizon; evicted
/// poses are frozen by the caller.
class SlidingWindow {
 public:
  explicit SlidingWindow(double horizon_s);

  /// Adds an entry and returns the evicted ones, oldest first.
  std::vector<WindowEntry> push(WindowEntry entry);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  double horizon() const { return horizon_; }
  WindowEntry& operator[](std::size_t i) { return entries_[i]; }
  const WindowEntry& operator[](std::size_t i) const { return entries_[i]; }
  WindowEntry& back() { return entries_.back(); }
  const WindowEntry& back() const { return entries_.back(); }

 private:
  double horizon_;
  std::deque<WindowEntry> entries_;
};

/// Voxel-grid downsample whose voxel edge is chosen by bisection over
/// [0.01 m, 2.0 m] so the output count lands within 10% of `target`, or as
/// close as the cloud allows. Scans at or below the target pass through
/// unchanged. One centroid per occupied voxel; per-point timestamps
/// collapse to the voxel minimum. Throws std::invalid_argument on an empty
/// scan or zero target.
ScanFrame adaptive_downsample(const ScanFrame& scan, std::size_t target);

/// Un-skews a sweep under a linear motion model: each point is transformed
/// by the pose interpolated at its normalized timestamp between the sweep
/// boundary poses. Output is in the world frame; per-point timestamps are
/// preserved.
PointCloud deskew_scan(const ScanFrame& scan, const PoseSE3& pose_start,
                       const PoseSE3& pose_end);

/// Mean accelerometer direction over the trailing `window_s` seconds of
/// `imu` (the stream must be time-sorted). Quasi-static windows (RMS
/// deviation from the mean below 0.05 m/s²) get confidence 1; otherwise the
/// low-pass mean is still used and confidence degrades proportionally.
/// Throws DegenerateInputError when the window holds fewer than 10 samples
/// or the mean vanishes.
GravityEstimate estimate_gravity(const std::vector<ImuSample>& imu,
                                 double window_s);

/// Registers a downsampled scan (deskewed into its sweep-end body frame)
/// against the keyframe map by point-to-plane ICP, with a motion prior
/// pulling toward `init` (the constant-velocity prediction). Throws
/// NoOverlapError when the scan shares nothing with the map.
IcpResult register_scan(const PointCloud& scan_end_frame,
                        const RegistrationTarget& local_map,
                        const PoseSE3& init, const OdometryConfig& cfg);

struct WindowRefineResult {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Set when the damped normal equations produced a non-finite update;
  /// the window poses are left at their previous values.
  bool singular = false;
};

/// Joint damped Gauss-Newton refinement of all window boundary poses:
/// point-to-plane residuals of every window scan against the keyframe map,
/// constant-velocity smoothness between consecutive boundary poses, and
/// gravity-direction residuals weighted by measurement confidence. The
/// first boundary (the window's entry pose) stays fixed. Runs at most 10
/// iterations, stops when the largest pose update drops below 1e-5, and
/// never accepts a step that increases the objective on the iteration's
/// own correspondence set.
WindowRefineResult window_refine(SlidingWindow& window,
                                 const RegistrationTarget& keyframe_map,
                                 const OdometryConfig& cfg);

/// True when a new keyframe is due: the current scan's overlap with the
/// last keyframe falls below keyframe_overlap_thresh, or the body moved
/// more than keyframe_dist_thresh since it. Both clouds are compared in
/// the world frame.
bool keyframe_decision(const PoseSE3& pose, const PointCloud& scan_body,
                       const LidarKeyframe& last_kf,
                       const OdometryConfig& cfg);

/// Locally re-aligns the keyframes that overlap the newly added one
/// (overlap_ratio above refine_overlap_thresh, computed in world frame):
/// jointly minimizes pairwise point-to-plane residuals among the selected
/// keyframes with damped Gauss-Newton, keeping every non-selected keyframe
/// and the lowest-id selected keyframe fixed. Deterministic; a new
/// keyframe without overlapping neighbors is a no-op. Returns the number
/// of keyframes whose pose moved.
std::size_t keyframe_map_refine(std::vector<LidarKeyframe>& keyframes,
                                std::size_t new_kf_id,
                                const OdometryConfig& cfg);

/// Lazily loaded scan sequence: `count` sweeps fetched by index. Fetching
/// may read from disk; indices are requested in order, each exactly once.
struct ScanSource {
  std::size_t count = 0;
  std::function<ScanFrame(std::size_t)> fetch;
};

/// Scan source over a dataset scans/ directory (index.json plus one PLY
/// per sweep), loading each sweep on demand.
ScanSource scan_source_from_dir(const std::filesystem::path& scans_dir);

struct OdometryResult {
  Trajectory trajectory;  ///< body pose at each sweep end
  PointCloud map;         ///< keyframe map, world frame, voxel-deduped
  std::vector<LidarKeyframe> keyframes;
  std::vector<std::string> warnings;
};

/// When odometry aborts, the partial result up to the last good scan is
/// attached to the TrackingLostError so callers can serialize diagnostics.
class OdometryAbort : public TrackingLostError {
 public:
  OdometryAbort(const std::string& message,
                std::shared_ptr<OdometryResult> partial)
      : TrackingLostError(message), partial_(std::move(partial)) {}
  const OdometryResult* partial() const { return partial_.get(); }

 private:
  std::shared_ptr<OdometryResult> partial_;
};

/// Full odometry pipeline: downsample, deskew, scan-to-map registration
/// with a constant-velocity prior, sliding-window refinement, keyframe
/// admission, and local keyframe map refinement. The first pose is
/// anchored at the origin with roll/pitch aligned so measured gravity
/// points along world +z. Inputs must be time-sorted. Deterministic.
/// Throws OdometryAbort (a TrackingLostError) when registration loses the
/// map, with the partial result attached.
OdometryResult run_lidar_odometry(const ScanSource& scans,
                                  const std::vector<ImuSample>& imu,
                                  const OdometryConfig& cfg);
OdometryResult run_lidar_odometry(const std::vector<ScanFrame>& scans,
                                  const std::vector<ImuSample>& imu,
                                  const OdometryConfig& cfg);

}  // namespace hallmap
