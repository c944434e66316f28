// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "hallmap/geometry.hpp"
#include "hallmap/kdtree.hpp"
#include "hallmap/point_cloud.hpp"

namespace hallmap {

/// Closed-form least-squares similarity alignment of corresponded point
/// sets: minimizes sum ||dst_i - s*R*src_i - t||^2 (Umeyama's method).
/// with_scale=false locks s=1. det(R)=+1 is enforced by the sign-corrected
/// SVD, so reflections are never returned. Requires >= 3 non-collinear
/// points; throws DegenerateInputError otherwise.
Sim3Transform umeyama_align(const std::vector<Vec3>& src,
                            const std::vector<Vec3>& dst, bool with_scale);
Sim3Transform umeyama_align(const PointCloud& src, const PointCloud& dst,
                            bool with_scale);

enum class IcpVariant { point_to_point, point_to_plane };

struct IcpConfig {
  int max_iterations = 50;
  double convergence_eps = 1e-6;  ///< meters; stop when |delta RMSE| below
  double max_corr_dist = 2.0;     ///< meters; initial correspondence gate
  double corr_dist_decay = 0.9;   ///< gate multiplier per iteration
  double min_corr_dist = 0.1;     ///< meters; gate floor
  IcpVariant variant = IcpVariant::point_to_point;
  /// When > 0, adds a residual pulling the estimate toward `init`
  /// (point-to-plane variant only; used by odometry as a motion prior).
  double motion_prior_weight = 0.0;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

struct IcpResult {
  PoseSE3 transform;  ///< maps source-frame points into the target frame
  /// RMSE of the final correspondences in the solver's own metric:
  /// point-to-point distance for the point-to-point variant, point-to-plane
  /// residual for the point-to-plane variant.
  double rmse = 0.0;
  int iterations = 0;
  bool converged = false;
  double inlier_fraction = 0.0;  ///< gated correspondences / |source|
  /// Per-iteration point-to-point RMSE over that iteration's gated
  /// correspondence set, before and after its transform update. The solver
  /// never accepts an update that worsens its own set, so
  /// rmse_after[i] <= rmse_before[i] always holds.
  std::vector<double> rmse_before;
  std::vector<double> rmse_after;
};

/// A target cloud prepared for repeated registration: spatial index plus
/// (for point-to-plane) per-point normals.
class RegistrationTarget {
 public:
  explicit RegistrationTarget(PointCloud cloud);
  RegistrationTarget(PointCloud cloud, std::vector<Vec3> normals);

  const PointCloud& cloud() const { return cloud_; }
  const KdTree& tree() const { return tree_; }
  bool has_normals() const { return !normals_.empty(); }
  const std::vector<Vec3>& normals() const { return normals_; }

 private:
  PointCloud cloud_;
  KdTree tree_;
  std::vector<Vec3> normals_;
};

/// Iterative closest point: alternate gated nearest-neighbor
/// correspondence (gate decays from max_corr_dist by corr_dist_decay per
/// iteration, floored at min_corr_dist) with a rigid update — closed-form
/// point-to-point, or linearized point-to-plane against target normals.
/// Deterministic given inputs. Throws NoOverlapError when the first
/// iteration finds no correspondences; ConfigError when point-to-plane is
/// requested without target normals.
IcpResult icp(const PointCloud& source, const RegistrationTarget& target,
              const PoseSE3& init, const IcpConfig& cfg);

/// Convenience overload: indexes `target` (and estimates its normals for
/// the point-to-plane variant) on the fly.
IcpResult icp(const PointCloud& source, const PointCloud& target,
              const PoseSE3& init, const IcpConfig& cfg);

/// Per-point normals from the k-nearest-neighbor covariance (smallest
/// eigenvector), oriented toward `viewpoint`. Degenerate neighborhoods
/// (rank < 2) yield a zero vector, which marks the normal invalid.
/// Requires |cloud| > k >= 3 (std::invalid_argument otherwise).
std::vector<Vec3> estimate_normals(const PointCloud& cloud, std::size_t k,
                                   const Vec3& viewpoint = Vec3::Zero());

/// Fraction of points of `a` whose nearest neighbor in `b` lies within
/// `radius`. Both clouds must be non-empty.
double overlap_ratio(const PointCloud& a, const KdTree& b_tree, double radius);
double overlap_ratio(const PointCloud& a, const PointCloud& b, double radius);

}  // namespace hallmap
