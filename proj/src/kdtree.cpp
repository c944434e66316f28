// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include "hallmap/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hallmap/errors.hpp"

namespace hallmap {

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!points_[i].allFinite()) {
      throw DegenerateInputError("non-finite coordinate at point index " +
                                 std::to_string(i));
    }
  }
  indices_.resize(points_.size());
  std::iota(indices_.begin(), indices_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, points_.size());
  }
}

std::int32_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
  nodes_.emplace_back();

  if (end - begin <= kLeafSize) {
    nodes_[id].first = static_cast<std::uint32_t>(begin);
    nodes_[id].count = static_cast<std::uint32_t>(end - begin);
    return id;
  }

  Vec3 lo = points_[indices_[begin]];
  Vec3 hi = lo;
  for (std::size_t i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[indices_[i]]);
    hi = hi.cwiseMax(points_[indices_[i]]);
  }
  const Vec3 extent = hi - lo;
  int axis = 0;
  if (extent.y() > extent.x()) axis = 1;
  if (extent.z() > extent[axis]) axis = 2;

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(indices_.begin() + static_cast<std::ptrdiff_t>(begin),
                   indices_.begin() + static_cast<std::ptrdiff_t>(mid),
                   indices_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = points_[a][axis];
                     const double cb = points_[b][axis];
                     if (ca != cb) return ca < cb;
                     return a < b;  // stable split for duplicate coordinates
                   });

  // Fill the node fields only after recursing: build() may reallocate
  // nodes_ and invalidate any reference taken before the calls.
  const double split = points_[indices_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

namespace {

inline bool closer(double d_a, std::size_t i_a, double d_b, std::size_t i_b) {
  if (d_a != d_b) return d_a < d_b;
  return i_a < i_b;
}

}  // namespace

KdTree::Neighbor KdTree::nearest(const Vec3& query) const {
  if (empty()) throw DegenerateInputError("nearest() on an empty tree");

  Neighbor best{0, std::numeric_limits<double>::infinity()};
  // Iterative DFS with an explicit stack; visits the near child first and
  // prunes the far child by split-plane distance.
  std::vector<std::int32_t> stack;
  stack.reserve(64);
  stack.push_back(root_);
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::size_t idx = indices_[i];
        const double d = (points_[idx] - query).norm();
        if (closer(d, idx, best.distance, best.index)) {
          best = {idx, d};
        }
      }
      continue;
    }
    const double delta = query[node.axis] - node.split;
    const std::int32_t near = delta < 0.0 ? node.left : node.right;
    const std::int32_t far = delta < 0.0 ? node.right : node.left;
    if (std::abs(delta) <= best.distance) stack.push_back(far);
    stack.push_back(near);
  }
  return best;
}

std::vector<KdTree::Neighbor> KdTree::knn(const Vec3& query,
                                          std::size_t k) const {
  std::vector<Neighbor> result;
  if (k == 0 || empty()) return result;
  k = std::min(k, size());

  // Bounded max-heap ordered worst-first by (distance, index).
  auto worse = [](const Neighbor& a, const Neighbor& b) {
    return closer(a.distance, a.index, b.distance, b.index);
  };
  std::vector<Neighbor> heap;
  heap.reserve(k);

  std::vector<std::int32_t> stack;
  stack.reserve(64);
  stack.push_back(root_);
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::size_t idx = indices_[i];
        const double d = (points_[idx] - query).norm();
        if (heap.size() < k) {
          heap.push_back({idx, d});
          std::push_heap(heap.begin(), heap.end(), worse);
        } else if (closer(d, idx, heap.front().distance, heap.front().index)) {
          std::pop_heap(heap.begin(), heap.end(), worse);
          heap.back() = {idx, d};
          std::push_heap(heap.begin(), heap.end(), worse);
        }
      }
      continue;
    }
    const double delta = query[node.axis] - node.split;
    const std::int32_t near = delta < 0.0 ? node.left : node.right;
    const std::int32_t far = delta < 0.0 ? node.right : node.left;
    if (heap.size() < k || std::abs(delta) <= heap.front().distance) {
      stack.push_back(far);
    }
    stack.push_back(near);
  }

  result = std::move(heap);
  std::sort(result.begin(), result.end(), worse);
  return result;
}

std::vector<KdTree::Neighbor> KdTree::radius_search(const Vec3& query,
                                                    double radius) const {
  std::vector<Neighbor> result;
  if (empty() || !(radius >= 0.0)) return result;

  std::vector<std::int32_t> stack;
  stack.reserve(64);
  stack.push_back(root_);
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::size_t idx = indices_[i];
        const double d = (points_[idx] - query).norm();
        if (d <= radius) result.push_back({idx, d});
      }
      continue;
    }
    const double delta = query[node.axis] - node.split;
    const std::int32_t near = delta < 0.0 ? node.left : node.right;
    const std::int32_t far = delta < 0.0 ? node.right : node.left;
    if (std::abs(delta) <= radius) stack.push_back(far);
    stack.push_back(near);
  }

  std::sort(result.begin(), result.end(), [](const Neighbor& a,
                                             const Neighbor& b) {
    return closer(a.distance, a.index, b.distance, b.index);
  });
  return result;
}

}  // namespace hallmap
