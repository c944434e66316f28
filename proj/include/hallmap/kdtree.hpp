// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "hallmap/geometry.hpp"

namespace hallmap {

/// Static 3-d tree over a point set for exact nearest-neighbor queries.
///
/// Build splits at the median along the axis of largest extent and stops at
/// small leaves; queries prune with the usual split-plane bound, so results
/// are exact, not approximate. All tie-breaks (equal distances, equal
/// coordinates) fall back to the smaller original point index, which keeps
/// query results independent of build and traversal order.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index = 0;   ///< index into the point set the tree was built on
    double distance = 0.0;   ///< Euclidean distance to the query
  };

  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// Nearest point to `query`. Throws DegenerateInputError on an empty tree.
  Neighbor nearest(const Vec3& query) const;

  /// The k nearest points, ascending by (distance, index). Returns fewer
  /// than k when the tree is smaller than k.
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;

  /// All points within `radius` of `query`, ascending by (distance, index).
  std::vector<Neighbor> radius_search(const Vec3& query, double radius) const;

 private:
  struct Node {
    // Leaf when count > 0: indices_[first, first+count). Otherwise an
    // inner node splitting on `axis` at `split`; children at left/right.
    std::uint32_t first = 0;
    std::uint32_t count = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = 0;
    double split = 0.0;
  };

  static constexpr std::size_t kLeafSize = 16;

  std::int32_t build(std::size_t begin, std::size_t end);

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> indices_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace hallmap
