// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hallmap/geometry.hpp"

namespace hallmap {

using Rgb = std::array<std::uint8_t, 3>;

/// Point container with optional parallel per-point color and timestamp
/// arrays. Optional arrays are either empty or exactly points.size() long.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;
  std::vector<double> times;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_colors() const { return !colors.empty(); }
  bool has_times() const { return !times.empty(); }

  void reserve(std::size_t n);

  /// Throws DegenerateInputError on NaN/inf coordinates (naming the point
  /// index) or mismatched parallel array lengths.
  void validate() const;

  PointCloud transformed(const PoseSE3& pose) const;
  PointCloud transformed(const Sim3Transform& s) const;

  /// Append another cloud; optional arrays must agree in presence.
  void append(const PointCloud& other);
};

/// Voxel-grid filter: one centroid per occupied voxel, output in first-visit
/// order (deterministic for a fixed input order). Per-point timestamps, when
/// present, collapse to the voxel minimum; colors to the first point's color.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel_edge);

/// Deterministic point subsample: every k-th point, k chosen so the output
/// has roughly `target` points.
PointCloud stride_subsample(const PointCloud& cloud, std::size_t target);

}  // namespace hallmap
