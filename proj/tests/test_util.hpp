// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hallmap/geometry.hpp"
#include "hallmap/point_cloud.hpp"
#include "hallmap/rng.hpp"

namespace hallmap::testutil {

inline Vec3 random_vec(const CounterRng& rng, std::uint64_t i, double lo,
                       double hi) {
  return Vec3(rng.uniform(3 * i, lo, hi), rng.uniform(3 * i + 1, lo, hi),
              rng.uniform(3 * i + 2, lo, hi));
}

inline Vec3 random_unit(const CounterRng& rng, std::uint64_t i) {
  Vec3 v(rng.normal(3 * i), rng.normal(3 * i + 1), rng.normal(3 * i + 2));
  const double n = v.norm();
  return n > 1e-12 ? Vec3(v / n) : Vec3::UnitZ();
}

/// Uniformly random rotation (quaternion from 4 normals).
inline Quat random_rotation(const CounterRng& rng, std::uint64_t i) {
  Quat q(rng.normal(4 * i), rng.normal(4 * i + 1), rng.normal(4 * i + 2),
         rng.normal(4 * i + 3));
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

/// Random rotation with angle bounded inside (0, max_angle).
inline Quat random_rotation_bounded(const CounterRng& rng, std::uint64_t i,
                                    double max_angle) {
  const Vec3 axis = random_unit(rng, 2 * i);
  const double angle = rng.uniform(100000 + i, 1e-4, max_angle);
  return Quat(Eigen::AngleAxisd(angle, axis));
}

inline PoseSE3 random_pose(const CounterRng& rng, std::uint64_t i,
                           double translation_extent = 5.0,
                           double max_angle = 3.0) {
  return PoseSE3(random_rotation_bounded(rng, i, max_angle),
                 random_vec(rng, 200000 + i, -translation_extent,
                            translation_extent));
}

inline PointCloud random_cloud(std::uint64_t seed, std::size_t n,
                               double extent) {
  const CounterRng rng(seed, /*stream=*/7001);
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cloud.points.push_back(random_vec(rng, i, -extent, extent));
  }
  return cloud;
}

/// Unique path under the build-tree temp dir for test artifacts.
inline std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "hallmap_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace hallmap::testutil
