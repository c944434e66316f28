// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic hall, trajectory, and sensor models. Everything here is an
// analytic oracle: box geometry with closed-form ray intersections and
// surface distances, a piecewise trapezoidal trajectory with exact
// derivatives, and counter-based noise so outputs are reproducible per
// seed regardless of thread schedule.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hallmap/geometry.hpp"
#include "hallmap/point_cloud.hpp"
#include "hallmap/rng.hpp"
#include "hallmap/sensor_data.hpp"

namespace hallmap {

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Distance from p to the box surface (zero on the surface, positive on
/// both sides).
double box_surface_distance(const Box& box, const Vec3& p);

struct RayHit {
  bool hit = false;
  double range = 0.0;
  Vec3 normal = Vec3::Zero();  ///< outward surface normal at the hit
};

/// First intersection of the ray with the box surface at range > 0
/// (closed-form slab test). `dir` must be unit length.
RayHit box_raycast(const Box& box, const Vec3& origin, const Vec3& dir,
                   double max_range);

/// Hall-like environment: an enclosing shell plus interior structures,
/// all solid boxes. Watertight for rays cast from free interior space.
struct HallModel {
  std::vector<Box> solids;
  Box interior;        ///< free-space hull (inside the shell)
  Box open_area;       ///< kept free of structures; > 10 m across
  Box corridor;        ///< free corridor volume between its two walls
  double corridor_width = 0.0;
  std::vector<Vec3> loop_route;  ///< closed collision-free tour (z = body height)

  RayHit raycast(const Vec3& origin, const Vec3& dir, double max_range) const;
  /// Exact distance from p to the nearest solid surface.
  double distance_to_surface(const Vec3& p) const;
  bool inside_solid(const Vec3& p) const;
  /// Inside the interior hull, outside every solid, at least `clearance`
  /// from all surfaces.
  bool in_free_space(const Vec3& p, double clearance) const;
};

/// Deterministic hall per seed: shell, one narrow corridor (< 2 m), one
/// open area (> 10 m across), and 6-12 interior structures total.
HallModel build_hall(std::uint64_t seed);

/// Dense surface sampling of the faces bounding free space, grid-spaced.
/// Points strictly inside other solids or outside the interior hull are
/// dropped, so every sample lies on the visible model surface.
PointCloud sample_surface(const HallModel& hall, double spacing);

/// Box that exists only during [t0, t1).
struct SemiStaticObject {
  Box box;
  double t0 = 0.0;
  double t1 = 0.0;
  bool present_at(double t) const { return t >= t0 && t < t1; }
};

/// Hall plus transient objects; the time-aware ray oracle for sensors.
struct Scene {
  HallModel hall;
  std::vector<SemiStaticObject> objects;

  RayHit raycast(const Vec3& origin, const Vec3& dir, double t,
                 double max_range) const;
};

/// Warnings for semi-static objects that overlap static geometry or fall
/// outside the interior (one message per offending object).
std::vector<std::string> check_semistatic(
    const HallModel& hall, const std::vector<SemiStaticObject>& objects);

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

/// Continuous-time rigid motion with analytic derivatives.
class MotionModel {
 public:
  virtual ~MotionModel() = default;
  virtual PoseSE3 pose(double t) const = 0;
  virtual Vec3 velocity(double t) const = 0;          ///< world frame, m/s
  virtual Vec3 acceleration(double t) const = 0;      ///< world frame, m/s²
  virtual Vec3 angular_velocity(double t) const = 0;  ///< body frame, rad/s
};

struct TrajectoryLimits {
  double max_speed = 1.0;   ///< m/s
  double accel = 0.5;       ///< m/s²
  double yaw_rate = 0.6;    ///< rad/s
  double yaw_accel = 1.2;   ///< rad/s²
  double initial_dwell = 1.0;  ///< s of stillness before motion (IMU warm-up)
};

/// Piecewise-linear route: dwell, then per segment a turn-in-place toward
/// the segment heading followed by a trapezoidal-speed straight; a closed
/// route (first == last waypoint) ends by turning back to the initial
/// heading, so start and end pose coincide. Yaw follows the path tangent;
/// roll and pitch stay zero.
class RouteTrajectory : public MotionModel {
 public:
  /// Throws DegenerateInputError when a waypoint (or any point along a
  /// segment) violates the 0.4 m clearance inside `hall`.
  RouteTrajectory(const HallModel& hall, std::vector<Vec3> waypoints,
                  const TrajectoryLimits& limits = {});

  double duration() const;  ///< time at which the route completes
  PoseSE3 pose(double t) const override;
  Vec3 velocity(double t) const override;
  Vec3 acceleration(double t) const override;
  Vec3 angular_velocity(double t) const override;

  /// Poses sampled at `rate` Hz over [0, t_end].
  Trajectory sample(double rate, double t_end) const;

  static constexpr double kClearance = 0.4;

 private:
  struct Phase {
    enum class Kind { dwell, turn, move } kind = Kind::dwell;
    double t0 = 0.0, t1 = 0.0;
    Vec3 start = Vec3::Zero();   // position (constant during dwell/turn)
    Vec3 dir = Vec3::UnitX();    // unit direction of travel (move)
    double length = 0.0;         // move: segment length
    double yaw0 = 0.0, yaw1 = 0.0;  // turn: endpoint yaws (unwrapped)
    double peak = 0.0;           // move: peak speed; turn: peak yaw rate
    double ramp = 0.0;           // seconds of accel/decel ramp
  };

  const Phase& phase_at(double t) const;
  static double profile_pos(const Phase& p, double t);
  static double profile_vel(const Phase& p, double t);
  static double profile_acc(const Phase& p, double t);

  std::vector<Phase> phases_;
};

// ---------------------------------------------------------------------------
// Sensors
// ---------------------------------------------------------------------------

struct LidarSpec {
  int rings = 32;              ///< elevation lines over [0, vertical_fov]
  int columns = 1800;          ///< azimuth steps per sweep
  double vertical_fov = 90.0;  ///< degrees, horizon up to zenith
  double max_range = 100.0;    ///< meters
  double range_sigma = 0.02;   ///< meters, Gaussian range noise
  double sweep_duration = 0.1; ///< seconds per full revolution
};

struct DepthCameraSpec {
  int width = 640;
  int height = 360;
  double hfov_deg = 100.0;      ///< horizontal field of view
  double baseline = 0.12;       ///< meters, stereo baseline
  double disparity_sigma = 0.25;  ///< pixels
  double max_depth = 20.0;      ///< meters; deeper pixels are invalid
  double grazing_deg = 80.0;    ///< incidence beyond this may drop out
  double dropout_prob = 0.7;    ///< dropout probability at grazing incidence
  CameraIntrinsics intrinsics() const;  ///< fx=fy from hfov, centered pp
};

/// One LiDAR sweep starting at `sweep_start`: per-column timestamps and
/// ray poses (so motion during the sweep is embedded in the data), exact
/// ray-cast ranges plus Gaussian noise. Points are in the sensor body
/// frame; per-point timestamps are absolute.
ScanFrame simulate_lidar(const Scene& scene, const MotionModel& motion,
                         const LidarSpec& spec, double sweep_start,
                         const CounterRng& rng, std::uint64_t sweep_index);

/// Pinhole depth image at time t for a camera at `cam_in_world` (optical
/// frame: z forward, x right, y down). Stereo noise sigma_z =
/// z^2 * sigma_d / (f * b); depths beyond max_depth (or lost to grazing
/// dropout) are 0.
DepthMap simulate_depth_camera(const Scene& scene, const PoseSE3& cam_in_world,
                               const DepthCameraSpec& spec, double t,
                               const CounterRng& rng, std::uint64_t frame_index);

/// IMU stream over [t0, t1) at `rate` Hz: accel = R^T (a_world + g e_z)
/// with g = 9.81, gyro = body angular rate, plus white noise.
std::vector<ImuSample> simulate_imu(const MotionModel& motion, double t0,
                                    double t1, double rate,
                                    double accel_sigma, double gyro_sigma,
                                    const CounterRng& rng);

// ---------------------------------------------------------------------------
// Camera rig
// ---------------------------------------------------------------------------

/// The four-camera tower: optical frames on a 0.05 m circle, yawed
/// 0/90/180/270 degrees, referenced to the front camera's optical frame.
struct RigGeometry {
  RigCalibration calibration;   ///< camera-to-rig-body (front = identity)
  PoseSE3 front_in_robot;       ///< front optical frame in the robot body frame
  std::vector<std::string> camera_order;  ///< front, left, rear, right

  PoseSE3 camera_in_robot(const std::string& id) const;
};

RigGeometry make_rig();

// ---------------------------------------------------------------------------
// Dataset emission
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::uint64_t seed = 0;
  double duration = 60.0;        ///< seconds of data (route dwells when done)
  std::vector<Vec3> waypoints;   ///< empty: use the hall's loop route
  TrajectoryLimits limits;
  LidarSpec lidar;
  DepthCameraSpec camera;
  double camera_rate = 10.0;     ///< Hz per camera
  double imu_rate = 200.0;       ///< Hz
  double imu_accel_sigma = 0.02; ///< m/s²
  double imu_gyro_sigma = 0.002; ///< rad/s
  double gt_trajectory_rate = 20.0;  ///< Hz
  double gt_surface_spacing = 0.01;  ///< meters
  /// Visual-stream corruption: a global scale bias plus per-stream yaw /
  /// position drift rates and small per-frame jitter.
  double visual_scale = 1.0;
  double stream_yaw_drift = 0.0;   ///< rad/s
  double stream_pos_drift = 0.0;   ///< m/s
  double stream_jitter_pos = 0.0;  ///< meters (per-frame white noise)
  double stream_jitter_yaw = 0.0;  ///< radians (per-frame white noise)
  double flow_keyframe_px = 16.0;  ///< tau for depth-image emission
  std::vector<SemiStaticObject> semi_static;
  bool emit_depth = true;
  bool emit_gt_surface = true;
};

struct DatasetSummary {
  std::size_t n_scans = 0;
  std::size_t n_imu = 0;
  std::size_t n_frames = 0;        ///< camera frames (all cameras)
  std::size_t n_depth_images = 0;  ///< frames with a depth PNG on disk
  std::size_t n_gt_surface_points = 0;
  std::vector<std::string> warnings;
};

/// Write a full dataset under out_dir:
///   rig.json, imu.csv, scans/{index.json, scan_*.ply},
///   depth/{index.json, <cam>_*.png}, streams/<cam>.txt,
///   groundtruth/{trajectory.txt, rig_trajectory.txt, mount.json,
///   surface.ply}, dataset.json.
/// Deterministic per config (byte-identical re-runs).
DatasetSummary emit_dataset(const SynthConfig& cfg,
                            const std::filesystem::path& out_dir);

}  // namespace hallmap
