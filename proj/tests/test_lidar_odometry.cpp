// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "hallmap/dataset.hpp"
#include "hallmap/errors.hpp"
#include "hallmap/io.hpp"
#include "hallmap/lidar_odometry.hpp"
#include "hallmap/synth.hpp"
#include "test_util.hpp"

using namespace hallmap;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

struct FixedPose : MotionModel {
  PoseSE3 p;
  explicit FixedPose(const PoseSE3& pose) : p(pose) {}
  PoseSE3 pose(double) const override { return p; }
  Vec3 velocity(double) const override { return Vec3::Zero(); }
  Vec3 acceleration(double) const override { return Vec3::Zero(); }
  Vec3 angular_velocity(double) const override { return Vec3::Zero(); }
};

/// Straight line at constant speed, level attitude.
struct ConstVel : MotionModel {
  Vec3 origin;
  Vec3 vel;
  ConstVel(const Vec3& o, const Vec3& v) : origin(o), vel(v) {}
  PoseSE3 pose(double t) const override {
    return PoseSE3(Quat::Identity(), origin + vel * t);
  }
  Vec3 velocity(double) const override { return vel; }
  Vec3 acceleration(double) const override { return Vec3::Zero(); }
  Vec3 angular_velocity(double) const override { return Vec3::Zero(); }
};

/// Turntable: spins about +z at `rate` from a fixed position.
struct Spinner : MotionModel {
  Vec3 at;
  double rate;
  Spinner(const Vec3& p, double r) : at(p), rate(r) {}
  PoseSE3 pose(double t) const override {
    return PoseSE3(rot_z(rate * t), at);
  }
  Vec3 velocity(double) const override { return Vec3::Zero(); }
  Vec3 acceleration(double) const override { return Vec3::Zero(); }
  Vec3 angular_velocity(double) const override {
    return Vec3(0.0, 0.0, rate);
  }
};

HallModel cube_room(double size, double shell = 0.5) {
  HallModel hall;
  const double s = shell, w = size;
  hall.interior = {{0, 0, 0}, {w, w, w}};
  hall.solids.push_back({{-s, -s, -s}, {w + s, w + s, 0}});
  hall.solids.push_back({{-s, -s, w}, {w + s, w + s, w + s}});
  hall.solids.push_back({{-s, -s, 0}, {0, w + s, w}});
  hall.solids.push_back({{w, -s, 0}, {w + s, w + s, w}});
  hall.solids.push_back({{-s, -s, 0}, {w + s, 0, w}});
  hall.solids.push_back({{-s, w, 0}, {w + s, w + s, w}});
  return hall;
}

LidarSpec test_lidar() {
  LidarSpec spec;
  spec.rings = 16;
  spec.columns = 600;
  return spec;
}

/// One static sweep at `pose`, deskew-free (platform motionless).
ScanFrame static_sweep(const Scene& scene, const PoseSE3& pose, double t0,
                       std::uint64_t seed, std::size_t index,
                       double range_sigma = 0.02) {
  const FixedPose motion(pose);
  LidarSpec spec = test_lidar();
  spec.range_sigma = range_sigma;
  return simulate_lidar(scene, motion, spec, t0, CounterRng(seed, 1), index);
}

}  // namespace

TEST_SUITE("lidar_odometry") {

// --- adaptive downsampling -------------------------------------------------

TEST_CASE("small scans pass through unchanged") {
  ScanFrame scan;
  const CounterRng rng(1, 9);
  for (std::size_t i = 0; i < 40; ++i) {
    scan.points.points.push_back(testutil::random_vec(rng, i, 0.0, 10.0));
    scan.points.times.push_back(0.01 * static_cast<double>(i));
  }
  scan.sweep_end = 1.0;
  const ScanFrame out = adaptive_downsample(scan, 2000);
  REQUIRE(out.points.size() == 40);
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(out.points.points[i] == scan.points.points[i]);
  }
}

TEST_CASE("bisection lands within ten percent of the target") {
  ScanFrame scan;
  const CounterRng rng(2, 9);
  for (std::size_t i = 0; i < 100000; ++i) {
    scan.points.points.push_back(testutil::random_vec(rng, i, 0.0, 12.0));
    scan.points.times.push_back(1e-6 * static_cast<double>(i));
  }
  scan.sweep_end = 1.0;
  const ScanFrame out = adaptive_downsample(scan, 2000);
  CHECK(out.points.size() >= 1800);
  CHECK(out.points.size() <= 2200);
  CHECK(out.sweep_start == scan.sweep_start);
  CHECK(out.sweep_end == scan.sweep_end);
  // Timestamps survive the filter and stay within the sweep.
  REQUIRE(out.points.has_times());
  for (double t : out.points.times) {
    CHECK(t >= scan.sweep_start);
    CHECK(t <= scan.sweep_end);
  }
}

TEST_CASE("unreachable targets settle at the closest achievable count") {
  // 11^3 grid points 0.5 m apart: even the finest voxel edge (1 cm) keeps
  // exactly 1331 occupied voxels, so a 2000-point target is unreachable.
  ScanFrame scan;
  for (int x = 0; x < 11; ++x) {
    for (int y = 0; y < 11; ++y) {
      for (int z = 0; z < 11; ++z) {
        scan.points.points.emplace_back(0.5 * x, 0.5 * y, 0.5 * z);
        scan.points.times.push_back(0.0);
      }
    }
  }
  // Duplicate every point slightly perturbed so the input exceeds the
  // target and the filter actually runs.
  const std::size_t n = scan.points.size();
  for (std::size_t i = 0; i < n; ++i) {
    scan.points.points.push_back(scan.points.points[i] +
                                 Vec3(0.001, 0.001, 0.001));
    scan.points.times.push_back(0.0);
  }
  const ScanFrame out = adaptive_downsample(scan, 2000);
  CHECK(out.points.size() == 1331);
}

TEST_CASE("mixed densities come out spatially uniform") {
  // A dense 0.2 m cluster next to a sparse 10 m spread: after adaptive
  // downsampling the cluster cannot dominate the output.
  ScanFrame scan;
  const CounterRng rng(3, 9);
  for (std::size_t i = 0; i < 20000; ++i) {
    scan.points.points.push_back(Vec3(1, 1, 1) +
                                 testutil::random_vec(rng, i, 0.0, 0.2));
    scan.points.times.push_back(0.0);
  }
  for (std::size_t i = 0; i < 20000; ++i) {
    scan.points.points.push_back(
        testutil::random_vec(rng, 100000 + i, 0.0, 10.0));
    scan.points.times.push_back(0.0);
  }
  const ScanFrame out = adaptive_downsample(scan, 1000);
  std::size_t in_cluster = 0;
  for (const Vec3& p : out.points.points) {
    if ((p - Vec3(1.1, 1.1, 1.1)).lpNorm<Eigen::Infinity>() <= 0.12) {
      ++in_cluster;
    }
  }
  // The cluster region is under 0.002% of the sparse volume; voxel
  // uniformity caps its share of the output far below its 50% input share.
  CHECK(in_cluster < out.points.size() / 10);
}

// --- deskew -----------------------------------------------------------------

TEST_CASE("equal boundary poses deskew to a rigid transform") {
  ScanFrame scan;
  const CounterRng rng(4, 9);
  for (std::size_t i = 0; i < 200; ++i) {
    scan.points.points.push_back(testutil::random_vec(rng, i, -5.0, 5.0));
    scan.points.times.push_back(0.1 * static_cast<double>(i) / 200.0);
  }
  scan.sweep_end = 0.1;
  const PoseSE3 pose(rot_z(0.4) * rot_x(0.1), Vec3(1, 2, 3));
  const PointCloud out = deskew_scan(scan, pose, pose);
  const PointCloud rigid = scan.points.transformed(pose);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK((out.points[i] - rigid.points[i]).norm() < 1e-12);
  }
}

TEST_CASE("mid-sweep point under pure translation shifts half way") {
  ScanFrame scan;
  scan.points.points.emplace_back(2.0, 0.0, 0.0);
  scan.points.times.push_back(0.05);
  scan.sweep_start = 0.0;
  scan.sweep_end = 0.1;
  const PoseSE3 start;  // identity
  const PoseSE3 end(Quat::Identity(), Vec3(1, 0, 0));
  const PointCloud out = deskew_scan(scan, start, end);
  CHECK(out.points[0].isApprox(Vec3(2.5, 0.0, 0.0), 1e-15));
}

TEST_CASE("deskewing a spinning sensor recovers the wall geometry") {
  const HallModel hall = cube_room(10.0);
  const Scene scene{hall, {}};
  const Spinner motion(Vec3(5, 5, 2), 0.8);  // 4.6 degrees per sweep
  LidarSpec spec = test_lidar();
  spec.range_sigma = 0.0;
  const ScanFrame scan =
      simulate_lidar(scene, motion, spec, 0.0, CounterRng(0, 1), 0);
  REQUIRE(scan.points.size() > 3000);

  const PointCloud deskewed =
      deskew_scan(scan, motion.pose(scan.sweep_start),
                  motion.pose(scan.sweep_end));
  double worst_deskewed = 0.0;
  for (const Vec3& p : deskewed.points) {
    worst_deskewed = std::max(worst_deskewed, hall.distance_to_surface(p));
  }
  CHECK(worst_deskewed < 0.002);

  // Treating the sweep as rigid at the start pose smears the far columns.
  const PointCloud rigid = scan.points.transformed(motion.pose(0.0));
  double worst_rigid = 0.0;
  for (const Vec3& p : rigid.points) {
    worst_rigid = std::max(worst_rigid, hall.distance_to_surface(p));
  }
  CHECK(worst_rigid > 0.1);
}

// --- gravity ----------------------------------------------------------------

TEST_CASE("constant accelerometer gives the exact direction") {
  std::vector<ImuSample> imu;
  for (int i = 0; i < 200; ++i) {
    imu.push_back({0.005 * i, Vec3(0, 0, 9.81), Vec3::Zero()});
  }
  const GravityEstimate g = estimate_gravity(imu, 1.0);
  CHECK(g.direction.isApprox(Vec3::UnitZ(), 1e-12));
  CHECK(g.confidence == 1.0);
}

TEST_CASE("noisy static imu stays within half a degree") {
  const FixedPose motion(PoseSE3::identity());
  // sigma = 0.1 m/s^2 accel noise over one second at 200 Hz.
  const auto imu =
      simulate_imu(motion, 0.0, 1.0, 200.0, 0.1, 0.01, CounterRng(5, 3));
  const GravityEstimate g = estimate_gravity(imu, 1.0);
  const double angle = std::acos(std::clamp(g.direction.dot(Vec3::UnitZ()),
                                            -1.0, 1.0));
  CHECK(angle < 0.5 * pi / 180.0);
  // 0.1 m/s^2 of noise exceeds the 0.05 quasi-static gate, so the
  // low-pass mean is used with degraded confidence.
  CHECK(g.confidence < 1.0);
  CHECK(g.confidence > 0.1);
}

TEST_CASE("tilted platform tilts the measured direction") {
  const Quat tilt = rot_x(10.0 * pi / 180.0);
  std::vector<ImuSample> imu;
  for (int i = 0; i < 100; ++i) {
    imu.push_back(
        {0.005 * i, tilt.conjugate() * Vec3(0, 0, 9.81), Vec3::Zero()});
  }
  const GravityEstimate g = estimate_gravity(imu, 1.0);
  const double angle = std::acos(std::clamp(g.direction.dot(Vec3::UnitZ()),
                                            -1.0, 1.0));
  CHECK(angle == doctest::Approx(10.0 * pi / 180.0).epsilon(1e-9));
}

TEST_CASE("dynamic windows degrade confidence; thin windows throw") {
  std::vector<ImuSample> shaking;
  for (int i = 0; i < 200; ++i) {
    const double wobble = 2.0 * std::sin(0.1 * i);
    shaking.push_back({0.005 * i, Vec3(wobble, 0, 9.81), Vec3::Zero()});
  }
  const GravityEstimate g = estimate_gravity(shaking, 1.0);
  CHECK(g.confidence < 0.1);
  CHECK(g.confidence > 0.0);

  std::vector<ImuSample> thin(shaking.begin(), shaking.begin() + 9);
  CHECK_THROWS_AS(estimate_gravity(thin, 1.0), DegenerateInputError);
  CHECK_THROWS_AS(estimate_gravity({}, 1.0), DegenerateInputError);
}

// --- sliding window ----------------------------------------------------------

TEST_CASE("window evicts to stay within its horizon") {
  SlidingWindow window(0.8);
  std::size_t evicted_total = 0;
  for (int k = 0; k < 12; ++k) {
    WindowEntry e;
    e.scan.sweep_start = 0.1 * k;
    e.scan.sweep_end = 0.1 * k + 0.1;
    evicted_total += window.push(std::move(e)).size();
    CHECK(window.back().scan.sweep_end -
              window[0].scan.sweep_start <=
          0.8 + 1e-12);
  }
  CHECK(window.size() == 8);
  CHECK(evicted_total == 4);
}

// --- registration against a map ----------------------------------------------

TEST_CASE("registering a map subset from the true pose is the identity") {
  const HallModel hall = cube_room(10.0);
  const Scene scene{hall, {}};
  const PoseSE3 truth(rot_z(0.3), Vec3(5, 4, 2));
  ScanFrame scan = static_sweep(scene, truth, 0.0, 11, 0);
  scan = adaptive_downsample(scan, 2000);

  const PointCloud map_world = scan.points.transformed(truth);
  const RegistrationTarget target(
      map_world, estimate_normals(map_world, 12, truth.translation));
  const IcpResult result =
      register_scan(scan.points, target, truth, OdometryConfig{});
  CHECK(result.transform.translation_distance_to(truth) < 1e-6);
  CHECK(result.transform.rotation_angle_to(truth) < 1e-7);
}

TEST_CASE("registration recovers a perturbed pose in the room") {
  const HallModel hall = cube_room(10.0);
  const Scene scene{hall, {}};
  const PoseSE3 truth(Quat::Identity(), Vec3(5, 5, 2));
  ScanFrame map_scan = static_sweep(scene, truth, 0.0, 12, 0);
  map_scan = adaptive_downsample(map_scan, 2000);
  const PointCloud map_world = map_scan.points.transformed(truth);
  const RegistrationTarget target(
      map_world, estimate_normals(map_world, 12, truth.translation));

  ScanFrame scan = static_sweep(scene, truth, 0.1, 13, 1);
  scan = adaptive_downsample(scan, 2000);
  const PoseSE3 init(rot_z(0.01), truth.translation + Vec3(0.05, -0.04, 0.02));
  const IcpResult result =
      register_scan(scan.points, target, init, OdometryConfig{});
  CHECK(result.transform.translation_distance_to(truth) < 0.02);
  CHECK(result.transform.rotation_angle_to(truth) < 0.3 * pi / 180.0);
}

// --- window refinement --------------------------------------------------------

namespace {

/// Window of `n` static sweeps with boundary poses perturbed off `truth`.
/// Point times are pinned to each sweep's end so the frozen deskew maps a
/// sweep rigidly through its end pose and the recovery target is exact.
SlidingWindow perturbed_window(const Scene& scene, const PoseSE3& truth,
                               std::size_t n, double offset) {
  SlidingWindow window(0.8);
  PoseSE3 prev = truth;
  for (std::size_t k = 0; k < n; ++k) {
    ScanFrame scan = static_sweep(scene, truth, 0.1 * k, 20 + k, k, 0.002);
    scan = adaptive_downsample(scan, 1500);
    for (double& t : scan.points.times) t = scan.sweep_end;
    WindowEntry e;
    e.scan = scan;
    const Vec3 shift(offset * (k % 2 == 0 ? 1.0 : -1.0), offset * 0.5, 0.0);
    e.pose_start = prev;
    e.pose_end = PoseSE3(truth.rotation, truth.translation + shift);
    prev = e.pose_end;
    e.gravity = {Vec3::UnitZ(), 1.0};
    window.push(std::move(e));
  }
  return window;
}

}  // namespace

TEST_CASE("window refinement descends its objective and recovers poses") {
  // Low sensor noise keeps the frozen objective's floor well below the
  // cost injected by the 3 cm pose perturbations, making the descent
  // ratio meaningful.
  const HallModel hall = cube_room(10.0);
  const Scene scene{hall, {}};
  const PoseSE3 truth(Quat::Identity(), Vec3(5, 5, 2));
  ScanFrame map_scan = static_sweep(scene, truth, 0.0, 30, 0, 0.002);
  map_scan = adaptive_downsample(map_scan, 2000);
  const PointCloud map_world = map_scan.points.transformed(truth);
  const RegistrationTarget target(
      map_world, estimate_normals(map_world, 12, truth.translation));

  SlidingWindow window = perturbed_window(scene, truth, 4, 0.03);
  const WindowRefineResult result =
      window_refine(window, target, OdometryConfig{});
  CHECK_FALSE(result.singular);
  CHECK(result.final_cost <= result.initial_cost);
  CHECK(result.final_cost < 0.25 * result.initial_cost);
  for (std::size_t i = 0; i < window.size(); ++i) {
    CHECK(window[i].pose_end.translation_distance_to(truth) < 0.01);
  }
}

TEST_CASE("single-scan window refinement matches direct registration") {
  const HallModel hall = cube_room(10.0);
  const Scene scene{hall, {}};
  const PoseSE3 truth(Quat::Identity(), Vec3(5, 5, 2));
  ScanFrame map_scan = static_sweep(scene, truth, 0.0, 31, 0);
  map_scan = adaptive_downsample(map_scan, 2000);
  const PointCloud map_world = map_scan.points.transformed(truth);
  const RegistrationTarget target(
      map_world, estimate_normals(map_world, 12, truth.translation));

  ScanFrame scan = static_sweep(scene, truth, 0.1, 32, 1);
  scan = adaptive_downsample(scan, 1500);
  const PoseSE3 off(truth.rotation, truth.translation + Vec3(0.02, 0.01, 0.0));

  SlidingWindow window(0.8);
  WindowEntry e;
  e.scan = scan;
  e.pose_start = off;
  e.pose_end = off;
  e.gravity = {Vec3::UnitZ(), 1.0};
  window.push(std::move(e));
  const WindowRefineResult wr = window_refine(window, target, OdometryConfig{});
  CHECK_FALSE(wr.singular);

  const IcpResult reg =
      register_scan(scan.points, target, off, OdometryConfig{});
  CHECK(window[0].pose_end.translation_distance_to(reg.transform) < 0.005);
  CHECK(window[0].pose_end.rotation_angle_to(reg.transform) < 0.1 * pi / 180);
}

TEST_CASE("gravity residuals remove tilt that nothing else constrains") {
  // A keyframe map too far away to yield correspondences: only the gravity
  // term can correct the deliberately tilted window poses.
  const PointCloud far_map{{Vec3(500, 500, 500), Vec3(501, 500, 500),
                            Vec3(500, 501, 500), Vec3(500, 500, 501)},
                           {},
                           {}};
  const RegistrationTarget target(
      far_map, std::vector<Vec3>(4, Vec3::UnitZ()));

  const double tilt0 = 2.0 * pi / 180.0;
  const auto make_window = [&]() {
    SlidingWindow window(0.8);
    for (int k = 0; k < 2; ++k) {
      WindowEntry e;
      e.scan.points.points = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
      e.scan.points.times = {0.1 * k, 0.1 * k + 0.05, 0.1 * k + 0.09};
      e.scan.sweep_start = 0.1 * k;
      e.scan.sweep_end = 0.1 * k + 0.1;
      e.pose_start = PoseSE3(rot_x(tilt0), Vec3::Zero());
      e.pose_end = PoseSE3(rot_x(tilt0), Vec3::Zero());
      e.gravity = {Vec3::UnitZ(), 1.0};  // measured: perfectly level body
      window.push(std::move(e));
    }
    return window;
  };

  const auto tilt_of = [](const PoseSE3& p) {
    return std::acos(std::clamp(
        (p.rotation * Vec3::UnitZ()).dot(Vec3::UnitZ()), -1.0, 1.0));
  };

  // The smoothness prior is silenced so the only difference between the
  // two runs is the gravity term itself (the first boundary stays frozen
  // at the tilted pose and would otherwise drag the solution back).
  OdometryConfig with_gravity;
  with_gravity.motion_prior_weight = 0.0;
  SlidingWindow window_g = make_window();
  window_refine(window_g, target, with_gravity);
  CHECK(tilt_of(window_g.back().pose_end) < 0.1 * pi / 180.0);

  OdometryConfig no_gravity;
  no_gravity.motion_prior_weight = 0.0;
  no_gravity.gravity_weight = 0.0;
  SlidingWindow window_n = make_window();
  window_refine(window_n, target, no_gravity);
  CHECK(tilt_of(window_n.back().pose_end) ==
        doctest::Approx(tilt0).epsilon(1e-6));
}

// --- keyframe decision ---------------------------------------------------------

TEST_CASE("keyframe decision thresholds") {
  OdometryConfig cfg;  // overlap < 0.7 or distance > 0.5
  LidarKeyframe kf;
  kf.pose = PoseSE3::identity();
  for (int i = 0; i < 100; ++i) {
    kf.points.points.emplace_back(0.1 * i, 0.0, 1.0);
  }

  // Identical position and scan: no new keyframe.
  CHECK_FALSE(keyframe_decision(PoseSE3::identity(), kf.points, kf, cfg));

  // Displacement beyond 0.5 m forces one regardless of overlap.
  const PoseSE3 moved(Quat::Identity(), Vec3(0.6, 0, 0));
  PointCloud compensated = kf.points;  // same world points seen from `moved`
  for (Vec3& p : compensated.points) p -= Vec3(0.6, 0, 0);
  CHECK(keyframe_decision(moved, compensated, kf, cfg));

  // Overlap 0.65 at zero displacement: below the 0.7 bar.
  PointCloud partial = kf.points;
  for (int i = 0; i < 35; ++i) partial.points[i] += Vec3(0, 50, 0);
  CHECK(keyframe_decision(PoseSE3::identity(), partial, kf, cfg));
  // Overlap 0.75: above the bar, stay.
  PointCloud mostly = kf.points;
  for (int i = 0; i < 25; ++i) mostly.points[i] += Vec3(0, 50, 0);
  CHECK_FALSE(keyframe_decision(PoseSE3::identity(), mostly, kf, cfg));
}

// --- keyframe map refinement -----------------------------------------------------

TEST_CASE("misaligned duplicate keyframes snap back together") {
  const HallModel hall = cube_room(10.0);
  const Scene scene{hall, {}};
  const PoseSE3 truth(Quat::Identity(), Vec3(5, 5, 2));
  ScanFrame scan = static_sweep(scene, truth, 0.0, 40, 0);
  scan = adaptive_downsample(scan, 2000);

  std::vector<LidarKeyframe> kfs(2);
  kfs[0].id = 0;
  kfs[0].pose = truth;
  kfs[0].points = scan.points;
  kfs[1].id = 1;
  kfs[1].pose = PoseSE3(rot_z(0.5 * pi / 180.0),
                        truth.translation + Vec3(0.02, -0.015, 0.01));
  kfs[1].points = scan.points;

  const std::size_t moved = keyframe_map_refine(kfs, 1, OdometryConfig{});
  CHECK(moved >= 1);
  // The anchor stayed, the misaligned copy realigned within 5 mm.
  CHECK(kfs[0].pose.is_approx(truth, 1e-12));
  CHECK(kfs[1].pose.translation_distance_to(truth) < 0.005);
  CHECK(kfs[1].pose.rotation_angle_to(truth) < 0.1 * pi / 180.0);
}

TEST_CASE("keyframes without overlap are left untouched") {
  const HallModel hall = cube_room(10.0);
  const Scene scene{hall, {}};
  const PoseSE3 near_pose(Quat::Identity(), Vec3(5, 5, 2));
  ScanFrame scan = static_sweep(scene, near_pose, 0.0, 41, 0);
  scan = adaptive_downsample(scan, 1000);

  std::vector<LidarKeyframe> kfs(3);
  kfs[0].id = 0;
  kfs[0].pose = near_pose;
  kfs[0].points = scan.points;
  kfs[1].id = 1;  // far away: zero overlap with the others
  kfs[1].pose = PoseSE3(Quat::Identity(), Vec3(500, 500, 2));
  kfs[1].points = scan.points;
  kfs[2].id = 2;
  kfs[2].pose = PoseSE3(Quat::Identity(),
                        near_pose.translation + Vec3(0.02, 0.0, 0.0));
  kfs[2].points = scan.points;

  const PoseSE3 far_before = kfs[1].pose;
  keyframe_map_refine(kfs, 2, OdometryConfig{});
  CHECK(kfs[1].pose.is_approx(far_before, 1e-15));
  CHECK(kfs[2].pose.translation_distance_to(near_pose) < 0.01);
}

// --- full pipeline ----------------------------------------------------------------

TEST_CASE("static platform: identity trajectory, deduplicated map") {
  const HallModel hall = cube_room(10.0);
  const Scene scene{hall, {}};
  const FixedPose motion(PoseSE3(Quat::Identity(), Vec3(5, 5, 2)));

  std::vector<ScanFrame> scans;
  const CounterRng rng(7, 1);
  for (std::size_t k = 0; k < 10; ++k) {
    scans.push_back(
        simulate_lidar(scene, motion, test_lidar(), 0.1 * k, rng, k));
  }
  const auto imu =
      simulate_imu(motion, 0.0, 1.1, 200.0, 0.02, 0.002, CounterRng(7, 3));

  const OdometryResult result = run_lidar_odometry(scans, imu, {});
  REQUIRE(result.trajectory.size() == 10);
  CHECK(result.keyframes.size() == 1);
  for (const TrajectoryEntry& e : result.trajectory) {
    CHECK(e.pose.translation_distance_to(result.trajectory[0].pose) < 0.002);
    CHECK(e.pose.rotation_angle_to(result.trajectory[0].pose) <
          0.05 * pi / 180.0);
  }
  // Deduplicated map stays the size of a single downsampled scan.
  CHECK(result.map.size() > 1200);
  CHECK(result.map.size() < 2500);
}

TEST_CASE("straight run tracks ground truth and is deterministic") {
  const HallModel hall = cube_room(10.0);
  const Scene scene{hall, {}};
  const ConstVel motion(Vec3(3, 5, 2), Vec3(1.0, 0.0, 0.0));

  std::vector<ScanFrame> scans;
  const CounterRng rng(8, 1);
  const std::size_t n = 40;
  for (std::size_t k = 0; k < n; ++k) {
    scans.push_back(
        simulate_lidar(scene, motion, test_lidar(), 0.1 * k, rng, k));
  }
  const auto imu =
      simulate_imu(motion, 0.0, 0.1 * n + 0.1, 200.0, 0.02, 0.002,
                   CounterRng(8, 3));

  const OdometryResult result = run_lidar_odometry(scans, imu, {});
  REQUIRE(result.trajectory.size() == n);
  CHECK(result.keyframes.size() >= 5);

  // Anchor the odometry frame at the true first sweep-end pose.
  const PoseSE3 anchor =
      motion.pose(scans[0].sweep_end) * result.trajectory[0].pose.inverse();
  double sq_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const PoseSE3 est = anchor * result.trajectory[k].pose;
    const PoseSE3 truth = motion.pose(scans[k].sweep_end);
    sq_sum += std::pow(est.translation_distance_to(truth), 2);
    CHECK(est.rotation_angle_to(truth) < 0.5 * pi / 180.0);
  }
  const double ate_rmse = std::sqrt(sq_sum / static_cast<double>(n));
  CHECK(ate_rmse < 0.04);  // 1% of the 3.9 m path

  // Bitwise determinism. (The scans vector is reused; the pipeline reads
  // but never mutates it.)
  const OdometryResult again = run_lidar_odometry(scans, imu, {});
  REQUIRE(again.trajectory.size() == result.trajectory.size());
  for (std::size_t k = 0; k < n; ++k) {
    CHECK(again.trajectory[k].pose.translation ==
          result.trajectory[k].pose.translation);
    CHECK(again.trajectory[k].pose.rotation.coeffs() ==
          result.trajectory[k].pose.rotation.coeffs());
  }
  REQUIRE(again.map.size() == result.map.size());
  for (std::size_t i = 0; i < result.map.size(); ++i) {
    CHECK(again.map.points[i] == result.map.points[i]);
  }

  // Halving the keyframe distance threshold never yields fewer keyframes.
  OdometryConfig tighter;
  tighter.keyframe_dist_thresh = 0.25;
  const OdometryResult more = run_lidar_odometry(scans, imu, tighter);
  CHECK(more.keyframes.size() >= result.keyframes.size());
}

TEST_CASE("losing the map aborts with the partial result attached") {
  // The second sweep "teleports" into a hangar whose walls are 40 m away
  // in every direction, while the map holds a 6 m room: with the predicted
  // pose carried over, every return lands tens of meters from the map and
  // registration has nothing to chew on.
  HallModel two_rooms = cube_room(6.0);
  const HallModel hangar = cube_room(80.0);
  for (Box b : hangar.solids) {
    b.min.x() += 500.0;
    b.max.x() += 500.0;
    two_rooms.solids.push_back(b);
  }
  two_rooms.interior = {{0, 0, 0}, {580, 80, 80}};
  const Scene scene{two_rooms, {}};

  std::vector<ScanFrame> scans;
  scans.push_back(static_sweep(scene, PoseSE3(Quat::Identity(), Vec3(3, 3, 2)),
                               0.0, 50, 0));
  scans.push_back(static_sweep(scene,
                               PoseSE3(Quat::Identity(), Vec3(540, 40, 40)),
                               0.1, 50, 1));

  try {
    run_lidar_odometry(scans, {}, {});
    FAIL("expected OdometryAbort");
  } catch (const OdometryAbort& abort) {
    CHECK(std::string(abort.what()).find("scan 1") != std::string::npos);
    REQUIRE(abort.partial() != nullptr);
    CHECK(abort.partial()->trajectory.size() == 1);
    CHECK(abort.partial()->map.size() > 500);
  }
}

TEST_CASE("scan sources load sweeps from an indexed directory") {
  const fs::path dir = testutil::temp_path("scan_source");
  fs::create_directories(dir);
  ScanIndex index;
  index.sweep_duration = 0.1;
  const CounterRng rng(9, 9);
  for (int k = 0; k < 3; ++k) {
    PointCloud cloud;
    for (std::size_t i = 0; i < 50; ++i) {
      cloud.points.push_back(testutil::random_vec(rng, 100 * k + i, 0., 5.));
      cloud.times.push_back(0.1 * k + 0.1 * static_cast<double>(i) / 50.0);
    }
    char name[32];
    std::snprintf(name, sizeof(name), "scan_%06d.ply", k);
    save_point_cloud(dir / name, cloud);
    index.scans.push_back({name, 0.1 * k, 0.1 * k + 0.1});
  }
  save_scan_index(index, dir / "index.json");

  const ScanSource source = scan_source_from_dir(dir);
  REQUIRE(source.count == 3);
  const ScanFrame frame = source.fetch(2);
  CHECK(frame.sweep_start == doctest::Approx(0.2));
  CHECK(frame.sweep_end == doctest::Approx(0.3));
  CHECK(frame.points.size() == 50);
  CHECK(frame.points.has_times());
  fs::remove_all(dir);
}

TEST_CASE("configuration validation rejects nonsense") {
  OdometryConfig cfg;
  cfg.horizon_s = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.keyframe_overlap_thresh = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.overlap_radius = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.gravity_weight = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  CHECK_NOTHROW(cfg.validate());
}

}  // TEST_SUITE
