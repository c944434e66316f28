// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include "hallmap/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "hallmap/errors.hpp"
#include "hallmap/parallel.hpp"

namespace hallmap {

Sim3Transform umeyama_align(const std::vector<Vec3>& src,
                            const std::vector<Vec3>& dst, bool with_scale) {
  if (src.size() != dst.size()) {
    throw DegenerateInputError("corresponded point sets differ in size");
  }
  const std::size_t n = src.size();
  if (n < 3) {
    throw DegenerateInputError("similarity alignment needs at least 3 points");
  }

  Vec3 mean_src = Vec3::Zero();
  Vec3 mean_dst = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mean_src += src[i];
    mean_dst += dst[i];
  }
  mean_src /= static_cast<double>(n);
  mean_dst /= static_cast<double>(n);

  Mat3 sigma = Mat3::Zero();  // cross-covariance dst x src
  double var_src = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 ds = dst[i] - mean_dst;
    const Vec3 ss = src[i] - mean_src;
    sigma += ds * ss.transpose();
    var_src += ss.squaredNorm();
  }
  sigma /= static_cast<double>(n);
  var_src /= static_cast<double>(n);

  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  if (!(var_src > 0.0) || d(1) <= 1e-12 * std::max(d(0), 1e-300)) {
    throw DegenerateInputError(
        "degenerate correspondence set (collinear or coincident points)");
  }

  // Sign-corrected SVD solution: reflections are folded into the smallest
  // singular direction so that det(R) = +1.
  Vec3 s_diag = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
    s_diag(2) = -1.0;
  }
  const Mat3 r =
      svd.matrixU() * s_diag.asDiagonal() * svd.matrixV().transpose();

  double scale = 1.0;
  if (with_scale) {
    scale = d.dot(s_diag) / var_src;
    if (!(scale > 0.0)) {
      throw DegenerateInputError("similarity alignment produced scale <= 0");
    }
  }
  const Vec3 t = mean_dst - scale * (r * mean_src);
  Quat q(r);
  q.normalize();
  return Sim3Transform(scale, q, t);
}

Sim3Transform umeyama_align(const PointCloud& src, const PointCloud& dst,
                            bool with_scale) {
  return umeyama_align(src.points, dst.points, with_scale);
}

void IcpConfig::validate() const {
  if (max_iterations < 1) throw ConfigError("icp: max_iterations must be >= 1");
  if (!(convergence_eps > 0.0)) throw ConfigError("icp: convergence_eps must be > 0");
  if (!(max_corr_dist > 0.0)) throw ConfigError("icp: max_corr_dist must be > 0");
  if (!(corr_dist_decay > 0.0) || corr_dist_decay > 1.0) {
    throw ConfigError("icp: corr_dist_decay must lie in (0, 1]");
  }
  if (!(min_corr_dist > 0.0)) throw ConfigError("icp: min_corr_dist must be > 0");
  if (motion_prior_weight < 0.0) {
    throw ConfigError("icp: motion_prior_weight must be >= 0");
  }
}

RegistrationTarget::RegistrationTarget(PointCloud cloud)
    : cloud_(std::move(cloud)), tree_(cloud_.points) {}

RegistrationTarget::RegistrationTarget(PointCloud cloud,
                                       std::vector<Vec3> normals)
    : cloud_(std::move(cloud)),
      tree_(cloud_.points),
      normals_(std::move(normals)) {
  if (normals_.size() != cloud_.size()) {
    throw DegenerateInputError("normal array length does not match cloud");
  }
}

namespace {

struct Correspondence {
  std::size_t src = 0;
  std::size_t dst = 0;
  double dist = 0.0;
};

/// Gated NN correspondences for the source cloud under pose `T`.
/// Parallel over source points; results are written to fixed slots and
/// compacted in index order, so the set is deterministic.
std::vector<Correspondence> correspond(const PointCloud& source,
                                       const KdTree& tree, const PoseSE3& T,
                                       double gate) {
  std::vector<Correspondence> slots(source.size());
  std::vector<std::uint8_t> hit(source.size(), 0);
  parallel_for(0, source.size(), [&](std::size_t i) {
    const KdTree::Neighbor nn = tree.nearest(T.apply(source.points[i]));
    if (nn.distance <= gate) {
      slots[i] = {i, nn.index, nn.distance};
      hit[i] = 1;
    }
  });
  std::vector<Correspondence> out;
  out.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (hit[i]) out.push_back(slots[i]);
  }
  return out;
}

double rmse_of(const PointCloud& source, const PointCloud& target,
               const std::vector<Correspondence>& corr, const PoseSE3& T) {
  if (corr.empty()) return 0.0;
  double sq = 0.0;
  for (const Correspondence& c : corr) {
    sq += (T.apply(source.points[c.src]) - target.points[c.dst]).squaredNorm();
  }
  return std::sqrt(sq / static_cast<double>(corr.size()));
}

/// Root-mean-square point-to-plane residual over correspondences with a
/// valid normal. The acceptance metric must match the solver's objective:
/// judging a point-to-plane step by point-to-point distances vetoes every
/// tangential correction, because sliding along a plane moves each point
/// away from the specific neighbor it was matched to.
double plane_rmse_of(const PointCloud& source, const PointCloud& target,
                     const std::vector<Vec3>& normals,
                     const std::vector<Correspondence>& corr,
                     const PoseSE3& T) {
  double sq = 0.0;
  std::size_t used = 0;
  for (const Correspondence& c : corr) {
    const Vec3& n = normals[c.dst];
    if (n.squaredNorm() < 0.5) continue;
    const double r =
        n.dot(T.apply(source.points[c.src]) - target.points[c.dst]);
    sq += r * r;
    ++used;
  }
  return used == 0 ? 0.0 : std::sqrt(sq / static_cast<double>(used));
}

/// One point-to-point update: closed-form rigid alignment of the current
/// correspondences, composed onto T.
PoseSE3 solve_point_to_point(const PointCloud& source, const PointCloud& target,
                             const std::vector<Correspondence>& corr,
                             const PoseSE3& T) {
  std::vector<Vec3> a(corr.size()), b(corr.size());
  for (std::size_t i = 0; i < corr.size(); ++i) {
    a[i] = T.apply(source.points[corr[i].src]);
    b[i] = target.points[corr[i].dst];
  }
  Sim3Transform delta;
  try {
    delta = umeyama_align(a, b, /*with_scale=*/false);
  } catch (const DegenerateInputError&) {
    return T;  // stay put rather than chase a rank-deficient update
  }
  return delta.se3() * T;
}

/// One linearized point-to-plane update (left-multiplicative twist), with
/// an optional prior pulling the pose toward `init`.
PoseSE3 solve_point_to_plane(const PointCloud& source, const PointCloud& target,
                             const std::vector<Vec3>& normals,
                             const std::vector<Correspondence>& corr,
                             const PoseSE3& T, const PoseSE3& init,
                             double prior_weight) {
  Mat6 a = Mat6::Zero();
  Vec6 b = Vec6::Zero();
  std::size_t used = 0;
  for (const Correspondence& c : corr) {
    const Vec3& n = normals[c.dst];
    if (n.squaredNorm() < 0.5) continue;  // invalid normal
    const Vec3 p = T.apply(source.points[c.src]);
    const double r = n.dot(p - target.points[c.dst]);
    Vec6 j;
    j.head<3>() = p.cross(n);
    j.tail<3>() = n;
    a += j * j.transpose();
    b += j * r;
    ++used;
  }
  if (used < 6) return T;

  if (prior_weight > 0.0) {
    // Penalize deviation from init: residual log(init^-1 * T), Jacobian
    // approximated by identity for the small deviations a prior is for.
    try {
      const Vec6 dev = se3_log(init.inverse() * T);
      a += prior_weight * Mat6::Identity();
      b += prior_weight * dev;
    } catch (const DegenerateInputError&) {
      // Pose is half a turn from the prior; the prior has nothing useful
      // to say, so skip it this iteration.
    }
  }

  // Light Levenberg damping: under-constrained geometry (a lone plane
  // pins only 3 of 6 degrees of freedom) leaves A singular, and the
  // damped system simply returns zero along the unconstrained directions.
  a.diagonal().array() += 1e-9 * (1.0 + a.trace());

  const Eigen::LDLT<Mat6> ldlt(a);
  if (ldlt.info() != Eigen::Success) return T;
  const Vec6 delta = ldlt.solve(-b);
  if (!delta.allFinite()) return T;
  return se3_exp(delta) * T;
}

}  // namespace

IcpResult icp(const PointCloud& source, const RegistrationTarget& target,
              const PoseSE3& init, const IcpConfig& cfg) {
  cfg.validate();
  if (source.empty()) throw DegenerateInputError("icp: empty source cloud");
  if (target.cloud().empty()) throw DegenerateInputError("icp: empty target cloud");
  if (cfg.variant == IcpVariant::point_to_plane && !target.has_normals()) {
    throw ConfigError("icp: point-to-plane requires target normals");
  }

  IcpResult result;
  result.transform = init;
  double gate = cfg.max_corr_dist;
  double last_corr_count = 0;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    const std::vector<Correspondence> corr =
        correspond(source, target.tree(), result.transform, gate);
    if (corr.empty()) {
      if (iter == 0) {
        throw NoOverlapError(
            "icp: no correspondences within the initial gate of " +
            std::to_string(gate) + " m");
      }
      break;  // keep the last accepted state
    }

    const bool p2p = cfg.variant == IcpVariant::point_to_point;
    const double before =
        p2p ? rmse_of(source, target.cloud(), corr, result.transform)
            : plane_rmse_of(source, target.cloud(), target.normals(), corr,
                            result.transform);
    PoseSE3 updated;
    if (p2p) {
      updated = solve_point_to_point(source, target.cloud(), corr,
                                     result.transform);
    } else {
      updated = solve_point_to_plane(source, target.cloud(), target.normals(),
                                     corr, result.transform, init,
                                     cfg.motion_prior_weight);
    }
    double after =
        p2p ? rmse_of(source, target.cloud(), corr, updated)
            : plane_rmse_of(source, target.cloud(), target.normals(), corr,
                            updated);
    if (after > before) {
      // The linearized step overshot; fall back to the current pose so the
      // per-set objective never worsens.
      updated = result.transform;
      after = before;
    }

    result.transform = updated;
    result.rmse = after;
    result.iterations = iter + 1;
    result.rmse_before.push_back(before);
    result.rmse_after.push_back(after);
    last_corr_count = static_cast<double>(corr.size());

    // Declare convergence only once the gate has annealed to its floor.
    // Each intermediate gate has its own fixed point, biased by the wrong
    // matches the wide gate admits; stalling there is the anneal's cue to
    // tighten, not a solution.
    if (std::abs(before - after) < cfg.convergence_eps &&
        gate <= cfg.min_corr_dist) {
      result.converged = true;
      break;
    }
    gate = std::max(gate * cfg.corr_dist_decay, cfg.min_corr_dist);
  }

  result.inlier_fraction = last_corr_count / static_cast<double>(source.size());
  return result;
}

IcpResult icp(const PointCloud& source, const PointCloud& target,
              const PoseSE3& init, const IcpConfig& cfg) {
  if (cfg.variant == IcpVariant::point_to_plane) {
    const std::size_t k = std::min<std::size_t>(12, target.size() - 1);
    RegistrationTarget prepared(target, estimate_normals(target, k));
    return icp(source, prepared, init, cfg);
  }
  RegistrationTarget prepared(target);
  return icp(source, prepared, init, cfg);
}

std::vector<Vec3> estimate_normals(const PointCloud& cloud, std::size_t k,
                                   const Vec3& viewpoint) {
  if (k < 3 || k >= cloud.size()) {
    throw std::invalid_argument(
        "estimate_normals: need |cloud| > k >= 3, got k=" + std::to_string(k) +
        " for " + std::to_string(cloud.size()) + " points");
  }
  const KdTree tree(cloud.points);
  std::vector<Vec3> normals(cloud.size());
  parallel_for(0, cloud.size(), [&](std::size_t i) {
    const std::vector<KdTree::Neighbor> nn = tree.knn(cloud.points[i], k);
    Vec3 mean = Vec3::Zero();
    for (const KdTree::Neighbor& n : nn) mean += cloud.points[n.index];
    mean /= static_cast<double>(nn.size());
    Mat3 cov = Mat3::Zero();
    for (const KdTree::Neighbor& n : nn) {
      const Vec3 d = cloud.points[n.index] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    // Ascending eigenvalues; rank < 2 means the mid eigenvalue vanishes
    // and no plane is defined.
    const double scale = std::max(eig.eigenvalues()(2), 1e-300);
    if (eig.eigenvalues()(1) <= 1e-9 * scale) {
      normals[i] = Vec3::Zero();
      return;
    }
    Vec3 n = eig.eigenvectors().col(0);
    if (n.dot(viewpoint - cloud.points[i]) < 0.0) n = -n;
    normals[i] = n;
  });
  return normals;
}

double overlap_ratio(const PointCloud& a, const KdTree& b_tree, double radius) {
  if (a.empty() || b_tree.empty()) {
    throw DegenerateInputError("overlap_ratio: empty input cloud");
  }
  std::vector<std::uint8_t> hit(a.size(), 0);
  parallel_for(0, a.size(), [&](std::size_t i) {
    if (b_tree.nearest(a.points[i]).distance <= radius) hit[i] = 1;
  });
  const auto count = std::count(hit.begin(), hit.end(), std::uint8_t{1});
  return static_cast<double>(count) / static_cast<double>(a.size());
}

double overlap_ratio(const PointCloud& a, const PointCloud& b, double radius) {
  if (a.empty() || b.empty()) {
    throw DegenerateInputError("overlap_ratio: empty input cloud");
  }
  return overlap_ratio(a, KdTree(b.points), radius);
}

}  // namespace hallmap
