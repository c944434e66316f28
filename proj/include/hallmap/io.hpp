// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hallmap/point_cloud.hpp"
#include "hallmap/sensor_data.hpp"

namespace hallmap {

// ---------------------------------------------------------------------------
// Point clouds (PLY)
//
// Grammar (subset of the standard):
//   ply
//   format {ascii|binary_little_endian} 1.0
//   element vertex <n>
//   property float x / y / z          (double also accepted on read)
//   property uchar red / green / blue (optional, all three or none)
//   property double t                 (optional per-point timestamp)
//   end_header
// Unknown scalar vertex properties are skipped on read. Big-endian files
// are rejected with UnsupportedFormatError; header problems raise
// ParseError carrying the line number.
// ---------------------------------------------------------------------------

enum class PlyFormat { ascii, binary_little_endian };

PointCloud load_point_cloud(const std::filesystem::path& path);
void save_point_cloud(const std::filesystem::path& path, const PointCloud& cloud,
                      PlyFormat format = PlyFormat::binary_little_endian);

// ---------------------------------------------------------------------------
// Trajectories (TUM text: "timestamp tx ty tz qx qy qz qw", '#' comments)
//
// Values are printed with 9 significant digits, which makes save→load→save
// byte-stable. Loading enforces strictly increasing timestamps and
// renormalizes off-unit quaternions (|norm-1| > 1e-6), reporting each fix
// through `warnings` when given.
// ---------------------------------------------------------------------------

Trajectory load_trajectory(const std::filesystem::path& path,
                           std::vector<std::string>* warnings = nullptr);
void save_trajectory(const std::filesystem::path& path, const Trajectory& traj);

// ---------------------------------------------------------------------------
// Rig calibration (JSON: {camera_id: {"q": [w,x,y,z], "t": [x,y,z]}})
// Duplicate camera ids are a ParseError; a missing or non-identity "front"
// entry is a ConfigError.
// ---------------------------------------------------------------------------

RigCalibration load_rig_calibration(const std::filesystem::path& path);
void save_rig_calibration(const std::filesystem::path& path,
                          const RigCalibration& rig);

// ---------------------------------------------------------------------------
// IMU logs (CSV: "t,ax,ay,az,gx,gy,gz", SI units; optional header line,
// '#' comments). Samples are sorted by time on load; an empty file is an
// empty stream, not an error.
// ---------------------------------------------------------------------------

std::vector<ImuSample> load_imu(const std::filesystem::path& path);
void save_imu(const std::filesystem::path& path,
              const std::vector<ImuSample>& samples);

// ---------------------------------------------------------------------------
// Depth maps (16-bit grayscale PNG, millimeters, 0 = invalid)
// ---------------------------------------------------------------------------

DepthMap load_depth_png(const std::filesystem::path& path);
void save_depth_png(const std::filesystem::path& path, const DepthMap& depth);

/// Read a whole file into a string (binary). Throws Error when unreadable.
std::string read_file(const std::filesystem::path& path);

/// Write a string to a file atomically enough for our purposes (truncate).
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace hallmap
