// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "hallmap/errors.hpp"
#include "hallmap/io.hpp"
#include "test_util.hpp"

using namespace hallmap;
namespace tu = hallmap::testutil;

namespace {

PointCloud random_full_cloud(std::uint64_t seed, std::size_t n) {
  const CounterRng rng(seed, 55);
  PointCloud cloud;
  for (std::size_t i = 0; i < n; ++i) {
    cloud.points.push_back(tu::random_vec(rng, i, -100.0, 100.0));
    cloud.colors.push_back({static_cast<std::uint8_t>(rng.bits(7000000 + i) & 0xff),
                            static_cast<std::uint8_t>(rng.bits(8000000 + i) & 0xff),
                            static_cast<std::uint8_t>(rng.bits(9000000 + i) & 0xff)});
    cloud.times.push_back(rng.uniform(600000 + i, 0.0, 1000.0));
  }
  return cloud;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("ply: three-point ascii file loads with exact coordinates") {
  const auto path = tu::temp_path("three.ply");
  write_file(path,
             "ply\n"
             "format ascii 1.0\n"
             "element vertex 3\n"
             "property float x\n"
             "property float y\n"
             "property float z\n"
             "end_header\n"
             "0 0 0\n"
             "1.5 -2.25 3\n"
             "-0.125 0.5 10\n");
  const PointCloud cloud = load_point_cloud(path);
  REQUIRE(cloud.size() == 3);
  CHECK(cloud.points[1] == Vec3(1.5, -2.25, 3.0));
  CHECK(cloud.points[2] == Vec3(-0.125, 0.5, 10.0));
  CHECK_FALSE(cloud.has_colors());
  CHECK_FALSE(cloud.has_times());
}

TEST_CASE("ply: save/load round-trip is exact at float32 precision") {
  const PointCloud cloud = random_full_cloud(41, 100000);
  for (const PlyFormat format :
       {PlyFormat::binary_little_endian, PlyFormat::ascii}) {
    const auto path = tu::temp_path(format == PlyFormat::ascii ? "rt_ascii.ply"
                                                               : "rt_bin.ply");
    save_point_cloud(path, cloud, format);
    const PointCloud back = load_point_cloud(path);
    REQUIRE(back.size() == cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (int axis = 0; axis < 3; ++axis) {
        // Coordinates are stored as float32; the round trip must hit that
        // value exactly (error <= one float32 ulp of the original).
        const double stored =
            static_cast<double>(static_cast<float>(cloud.points[i][axis]));
        CHECK(back.points[i][axis] == stored);
      }
      CHECK(back.colors[i] == cloud.colors[i]);
      CHECK(back.times[i] == cloud.times[i]);
    }
  }
}

TEST_CASE("ply: NaN coordinate is rejected with the point index") {
  const auto path = tu::temp_path("nan.ply");
  write_file(path,
             "ply\nformat ascii 1.0\nelement vertex 2\n"
             "property float x\nproperty float y\nproperty float z\n"
             "end_header\n0 0 0\n1 nan 2\n");
  CHECK_THROWS_WITH_AS((void)load_point_cloud(path),
                       doctest::Contains("point index 1"),
                       DegenerateInputError);
}

TEST_CASE("ply: malformed header errors carry the line number") {
  const auto path = tu::temp_path("badheader.ply");
  write_file(path,
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float\nend_header\n0 0 0\n");
  CHECK_THROWS_WITH_AS((void)load_point_cloud(path),
                       doctest::Contains("line 4"), ParseError);
}

TEST_CASE("ply: big-endian files are an unsupported format") {
  const auto path = tu::temp_path("bigendian.ply");
  write_file(path,
             "ply\nformat binary_big_endian 1.0\nelement vertex 0\n"
             "property float x\nproperty float y\nproperty float z\n"
             "end_header\n");
  CHECK_THROWS_AS((void)load_point_cloud(path), UnsupportedFormatError);
}

TEST_CASE("ply: unknown scalar properties are skipped on read") {
  const auto path = tu::temp_path("extraprop.ply");
  write_file(path,
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property float intensity\n"
             "end_header\n1 2 3 0.7\n");
  const PointCloud cloud = load_point_cloud(path);
  REQUIRE(cloud.size() == 1);
  CHECK(cloud.points[0] == Vec3(1, 2, 3));
}

TEST_CASE("trajectory: single identity line") {
  const auto path = tu::temp_path("single.txt");
  write_file(path, "# a comment\n0.0 0 0 0 0 0 0 1\n");
  const Trajectory traj = load_trajectory(path);
  REQUIRE(traj.size() == 1);
  CHECK(traj[0].t == 0.0);
  CHECK(traj[0].pose.is_approx(PoseSE3::identity(), 1e-15));
}

TEST_CASE("trajectory: save/load/save is byte-stable at 9 digits") {
  const CounterRng rng(42, 0);
  Trajectory traj;
  for (std::uint64_t i = 0; i < 100; ++i) {
    traj.push_back({0.1 * static_cast<double>(i) + rng.uniform(i, 0.0, 0.05),
                    tu::random_pose(rng, i)});
  }
  const auto path_a = tu::temp_path("traj_a.txt");
  const auto path_b = tu::temp_path("traj_b.txt");
  save_trajectory(path_a, traj);
  const Trajectory back = load_trajectory(path_a);
  save_trajectory(path_b, back);
  CHECK(read_file(path_a) == read_file(path_b));
}

TEST_CASE("trajectory: off-unit quaternion is renormalized with a warning") {
  const auto path = tu::temp_path("offunit.txt");
  write_file(path, "0.0 1 2 3 0 0 0 0.9\n");
  std::vector<std::string> warnings;
  const Trajectory traj = load_trajectory(path, &warnings);
  REQUIRE(traj.size() == 1);
  CHECK(traj[0].pose.rotation.norm() == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("renormalized") != std::string::npos);
}

TEST_CASE("trajectory: non-monotone timestamps name the offending line") {
  const auto path = tu::temp_path("nonmono.txt");
  write_file(path, "0.0 0 0 0 0 0 0 1\n0.5 1 0 0 0 0 0 1\n0.4 2 0 0 0 0 0 1\n");
  CHECK_THROWS_WITH_AS((void)load_trajectory(path),
                       doctest::Contains("line 3"), ParseError);
}

TEST_CASE("rig: four-camera file with yaws 0/90/180/270 loads, front identity") {
  const auto path = tu::temp_path("rig.json");
  const double h = std::sqrt(0.5);
  char text[1024];
  std::snprintf(text, sizeof(text),
                "{\n"
                "  \"front\": {\"q\": [1, 0, 0, 0], \"t\": [0, 0, 0]},\n"
                "  \"left\":  {\"q\": [%.17g, 0, %.17g, 0], \"t\": [-0.05, 0, -0.05]},\n"
                "  \"rear\":  {\"q\": [0, 0, 1, 0], \"t\": [0, 0, -0.1]},\n"
                "  \"right\": {\"q\": [%.17g, 0, %.17g, 0], \"t\": [0.05, 0, -0.05]}\n"
                "}\n",
                h, h, h, -h);
  write_file(path, text);
  const RigCalibration rig = load_rig_calibration(path);
  REQUIRE(rig.camera_to_body.size() == 4);
  CHECK(rig.extrinsic("front").is_approx(PoseSE3::identity(), 1e-12));
  // Rear camera: yaw 180 degrees about the vertical.
  CHECK(rig.extrinsic("rear").rotation_angle_to(PoseSE3::identity()) ==
        doctest::Approx(3.14159265358979).epsilon(1e-9));
}

TEST_CASE("rig: missing front camera is a calibration error") {
  const auto path = tu::temp_path("nofront.json");
  write_file(path, "{\"left\": {\"q\": [1,0,0,0], \"t\": [0,0,0]}}\n");
  CHECK_THROWS_AS((void)load_rig_calibration(path), ConfigError);
}

TEST_CASE("rig: non-identity front camera is a calibration error") {
  const auto path = tu::temp_path("badfront.json");
  write_file(path, "{\"front\": {\"q\": [1,0,0,0], \"t\": [0.1,0,0]}}\n");
  CHECK_THROWS_AS((void)load_rig_calibration(path), ConfigError);
}

TEST_CASE("rig: duplicate camera id is rejected") {
  const auto path = tu::temp_path("duprig.json");
  write_file(path,
             "{\"front\": {\"q\": [1,0,0,0], \"t\": [0,0,0]},\n"
             " \"front\": {\"q\": [1,0,0,0], \"t\": [0,0,0]}}\n");
  CHECK_THROWS_WITH_AS((void)load_rig_calibration(path),
                       doctest::Contains("duplicate"), ParseError);
}

TEST_CASE("rig: save/load round trip") {
  RigCalibration rig;
  rig.camera_to_body["front"] = PoseSE3::identity();
  rig.camera_to_body["rear"] = PoseSE3(rot_y(3.14159265358979 / 2.0), Vec3(0.05, 0, -0.05));
  const auto path = tu::temp_path("rig_rt.json");
  save_rig_calibration(path, rig);
  const RigCalibration back = load_rig_calibration(path);
  CHECK(back.extrinsic("rear").is_approx(rig.extrinsic("rear"), 1e-12));
}

TEST_CASE("imu: empty file loads as an empty stream") {
  const auto path = tu::temp_path("empty.csv");
  write_file(path, "");
  CHECK(load_imu(path).empty());
}

TEST_CASE("imu: header tolerated, samples sorted by time") {
  const auto path = tu::temp_path("imu.csv");
  write_file(path,
             "t,ax,ay,az,gx,gy,gz\n"
             "0.02,0,0,9.81,0,0,0\n"
             "0.00,0.1,0,9.81,0,0,0.5\n");
  const auto samples = load_imu(path);
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].t == doctest::Approx(0.0));
  CHECK(samples[0].gyro.z() == doctest::Approx(0.5));
  CHECK(samples[1].t == doctest::Approx(0.02));
}

TEST_CASE("imu: malformed data line carries its line number") {
  const auto path = tu::temp_path("badimu.csv");
  write_file(path, "0.0,0,0,9.81,0,0,0\n0.01,0,0,9.81,0,0\n");
  CHECK_THROWS_WITH_AS((void)load_imu(path), doctest::Contains("line 2"),
                       ParseError);
}

TEST_CASE("imu: save/load round trip") {
  std::vector<ImuSample> samples;
  samples.push_back({0.0, Vec3(0, 0, 9.81), Vec3(0, 0, 0)});
  samples.push_back({0.005, Vec3(0.25, -0.125, 9.80665), Vec3(0.01, 0, -0.02)});
  const auto path = tu::temp_path("imu_rt.csv");
  save_imu(path, samples);
  const auto back = load_imu(path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].accel.z() == doctest::Approx(9.80665).epsilon(1e-9));
  CHECK(back[1].gyro.x() == doctest::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("depth png: millimeter round trip, zeros stay invalid") {
  DepthMap depth;
  depth.resize(64, 48);
  const CounterRng rng(43, 0);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      if ((u + v) % 7 == 0) continue;  // leave invalid
      depth.at(u, v) =
          static_cast<float>(rng.uniform(static_cast<std::uint64_t>(v) * 64 + u,
                                         0.001, 60.0));
    }
  }
  const auto path = tu::temp_path("depth.png");
  save_depth_png(path, depth);
  const DepthMap back = load_depth_png(path);
  REQUIRE(back.width == depth.width);
  REQUIRE(back.height == depth.height);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double expect =
          std::lround(static_cast<double>(depth.at(u, v)) * 1000.0) / 1000.0;
      CHECK(std::abs(back.at(u, v) - expect) < 5e-6);
      if (depth.at(u, v) == 0.0f) CHECK(back.at(u, v) == 0.0f);
    }
  }
}

}  // TEST_SUITE
