// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include "hallmap/point_cloud.hpp"

#include <cmath>
#include <string>
#include <unordered_map>

#include "hallmap/errors.hpp"

namespace hallmap {

void PointCloud::reserve(std::size_t n) {
  points.reserve(n);
  if (has_colors()) colors.reserve(n);
  if (has_times()) times.reserve(n);
}

void PointCloud::validate() const {
  if (has_colors() && colors.size() != points.size()) {
    throw DegenerateInputError("color array length " +
                               std::to_string(colors.size()) +
                               " does not match point count " +
                               std::to_string(points.size()));
  }
  if (has_times() && times.size() != points.size()) {
    throw DegenerateInputError("timestamp array length " +
                               std::to_string(times.size()) +
                               " does not match point count " +
                               std::to_string(points.size()));
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw DegenerateInputError("non-finite coordinate at point index " +
                                 std::to_string(i));
    }
    if (has_times() && !std::isfinite(times[i])) {
      throw DegenerateInputError("non-finite timestamp at point index " +
                                 std::to_string(i));
    }
  }
}

PointCloud PointCloud::transformed(const PoseSE3& pose) const {
  PointCloud out = *this;
  for (auto& p : out.points) p = pose.apply(p);
  return out;
}

PointCloud PointCloud::transformed(const Sim3Transform& s) const {
  PointCloud out = *this;
  for (auto& p : out.points) p = s.apply(p);
  return out;
}

void PointCloud::append(const PointCloud& other) {
  if (empty()) {
    *this = other;
    return;
  }
  if (has_colors() != other.has_colors() ||
      has_times() != other.has_times()) {
    throw DegenerateInputError(
        "cannot append clouds with mismatched optional attributes");
  }
  points.insert(points.end(), other.points.begin(), other.points.end());
  colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  times.insert(times.end(), other.times.begin(), other.times.end());
}

namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    // Large-prime mix; good enough for grid keys.
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ull;
    h ^= static_cast<std::uint64_t>(k.y) * 19349669ull;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ull;
    return static_cast<std::size_t>(h);
  }
};

struct VoxelAccum {
  Vec3 sum = Vec3::Zero();
  std::size_t count = 0;
  double min_time = 0.0;
  Rgb first_color{0, 0, 0};
};

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double voxel_edge) {
  if (!(voxel_edge > 0.0) || !std::isfinite(voxel_edge)) {
    throw DegenerateInputError("voxel edge must be positive and finite");
  }
  const bool with_times = cloud.has_times();
  const bool with_colors = cloud.has_colors();
  const double inv = 1.0 / voxel_edge;

  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> index;
  index.reserve(cloud.size());
  std::vector<VoxelAccum> voxels;  // in first-visit order
  voxels.reserve(cloud.size() / 4 + 1);

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const VoxelKey key{static_cast<std::int64_t>(std::floor(p.x() * inv)),
                       static_cast<std::int64_t>(std::floor(p.y() * inv)),
                       static_cast<std::int64_t>(std::floor(p.z() * inv))};
    auto [it, fresh] = index.try_emplace(key, voxels.size());
    if (fresh) {
      voxels.emplace_back();
      if (with_times) voxels.back().min_time = cloud.times[i];
      if (with_colors) voxels.back().first_color = cloud.colors[i];
    }
    VoxelAccum& acc = voxels[it->second];
    acc.sum += p;
    acc.count += 1;
    if (with_times && cloud.times[i] < acc.min_time) {
      acc.min_time = cloud.times[i];
    }
  }

  PointCloud out;
  out.points.reserve(voxels.size());
  if (with_times) out.times.reserve(voxels.size());
  if (with_colors) out.colors.reserve(voxels.size());
  for (const VoxelAccum& acc : voxels) {
    out.points.push_back(acc.sum / static_cast<double>(acc.count));
    if (with_times) out.times.push_back(acc.min_time);
    if (with_colors) out.colors.push_back(acc.first_color);
  }
  return out;
}

PointCloud stride_subsample(const PointCloud& cloud, std::size_t target) {
  if (target == 0) throw DegenerateInputError("subsample target must be > 0");
  if (cloud.size() <= target) return cloud;
  const std::size_t stride = cloud.size() / target;
  PointCloud out;
  out.reserve(target + 1);
  for (std::size_t i = 0; i < cloud.size(); i += stride) {
    out.points.push_back(cloud.points[i]);
    if (cloud.has_colors()) out.colors.push_back(cloud.colors[i]);
    if (cloud.has_times()) out.times.push_back(cloud.times[i]);
  }
  return out;
}

}  // namespace hallmap
