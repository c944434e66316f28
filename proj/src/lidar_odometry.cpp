// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include "hallmap/lidar_odometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <unordered_set>
#include <utility>

#include "hallmap/dataset.hpp"
#include "hallmap/errors.hpp"
#include "hallmap/io.hpp"
#include "hallmap/parallel.hpp"

namespace hallmap {

namespace {

constexpr double kStaticAccelRms = 0.05;  ///< m/s²; quasi-static gate
constexpr int kGnMaxIterations = 10;
constexpr double kGnUpdateTol = 1e-5;
constexpr double kNumericStep = 1e-7;
/// Points per scan used by the window / keyframe refiners; the full
/// downsampled scans stay in the keyframes and the output map.
/// The window polish keeps the full downsampled scan: its frozen-pair
/// objective has a statistical minimum about sigma/sqrt(pairs) away from
/// the registration solution, and thinning the pairs would push refined
/// poses measurably off poses that were already converged.
constexpr std::size_t kRefineBudget = 2000;
constexpr std::size_t kKeyframeRefineBudget = 800;
constexpr std::size_t kNormalNeighbors = 12;

// Occupied-voxel count under the same floor-keying as voxel_downsample, so
// the bisection predicts the filter's output size exactly.
struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};
struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ull;
    h ^= static_cast<std::uint64_t>(k.y) * 19349669ull;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ull;
    return static_cast<std::size_t>(h);
  }
};

std::size_t count_voxels(const PointCloud& cloud, double edge) {
  std::unordered_set<VoxelKey, VoxelKeyHash> seen;
  seen.reserve(cloud.size());
  const double inv = 1.0 / edge;
  for (const Vec3& p : cloud.points) {
    seen.insert(VoxelKey{static_cast<std::int64_t>(std::floor(p.x() * inv)),
                         static_cast<std::int64_t>(std::floor(p.y() * inv)),
                         static_cast<std::int64_t>(std::floor(p.z() * inv))});
  }
  return seen.size();
}


GravityEstimate gravity_from_range(const ImuSample* begin,
                                   const ImuSample* end) {
  const std::size_t n = static_cast<std::size_t>(end - begin);
  Vec3 mean = Vec3::Zero();
  for (const ImuSample* s = begin; s != end; ++s) mean += s->accel;
  mean /= static_cast<double>(n);
  double sq = 0.0;
  for (const ImuSample* s = begin; s != end; ++s) {
    sq += (s->accel - mean).squaredNorm();
  }
  const double rms = std::sqrt(sq / static_cast<double>(n));
  const double norm = mean.norm();
  if (norm < 1e-9) {
    throw DegenerateInputError(
        "estimate_gravity: mean specific force vanishes");
  }
  GravityEstimate est;
  est.direction = mean / norm;
  est.confidence = rms < kStaticAccelRms ? 1.0 : kStaticAccelRms / rms;
  return est;
}

/// Gravity near time t, or nothing when the window is too thin.
std::optional<GravityEstimate> gravity_near(const std::vector<ImuSample>& imu,
                                            Timestamp t, double window_s) {
  const auto lo = std::lower_bound(
      imu.begin(), imu.end(), t - window_s,
      [](const ImuSample& s, double v) { return s.t < v; });
  const auto hi = std::upper_bound(
      imu.begin(), imu.end(), t,
      [](double v, const ImuSample& s) { return v < s.t; });
  if (hi - lo < 10) return std::nullopt;
  return gravity_from_range(&*lo, &*lo + (hi - lo));
}

/// Normalized sweep time of point i, clamped to [0, 1].
double sweep_fraction(const ScanFrame& scan, std::size_t i) {
  const double span = scan.sweep_end - scan.sweep_start;
  if (span <= 0.0) return 0.0;
  return std::clamp((scan.points.times[i] - scan.sweep_start) / span, 0.0,
                    1.0);
}

/// Motion-compensates a sweep into the body frame at its end boundary.
PointCloud deskew_to_end(const ScanFrame& scan, const PoseSE3& pose_start,
                         const PoseSE3& pose_end) {
  const PoseSE3 end_inv = pose_end.inverse();
  PointCloud out;
  out.points.resize(scan.points.size());
  out.times = scan.points.times;
  parallel_for(0, scan.points.size(), [&](std::size_t i) {
    const PoseSE3 at =
        interpolate_pose(pose_start, pose_end, sweep_fraction(scan, i));
    out.points[i] = end_inv.apply(at.apply(scan.points.points[i]));
  });
  return out;
}

/// Body-frame normals for a keyframe cloud, viewed from the sensor origin;
/// degenerate or tiny clouds yield zero (invalid) normals.
std::vector<Vec3> keyframe_body_normals(const PointCloud& body) {
  if (body.size() < 4) return std::vector<Vec3>(body.size(), Vec3::Zero());
  return estimate_normals(body, std::min(kNormalNeighbors, body.size() - 1),
                          Vec3::Zero());
}

/// Deterministic index subset: every k-th point up to roughly `budget`.
std::vector<std::size_t> budget_indices(std::size_t n, std::size_t budget) {
  const std::size_t stride = std::max<std::size_t>(1, n / budget);
  std::vector<std::size_t> idx;
  idx.reserve(n / stride + 1);
  for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
  return idx;
}

struct MapCorrespondence {
  std::size_t entry = 0;  ///< window entry index
  Vec3 body = Vec3::Zero();  ///< point in the entry's end-boundary frame
  Vec3 target = Vec3::Zero();   ///< map point, world
  Vec3 normal = Vec3::Zero();   ///< map normal, world
};

/// Dense damped Gauss-Newton over per-entry end poses. Returns false when
/// the normal equations go non-finite.
class WindowProblem {
 public:
  WindowProblem(std::vector<PoseSE3> poses, PoseSE3 first_start,
                std::vector<MapCorrespondence> corr,
                std::vector<std::pair<Vec3, double>> gravity,
                double smoothness_weight)
      : poses_(std::move(poses)),
        first_start_(first_start),
        corr_(std::move(corr)),
        gravity_(std::move(gravity)),
        smooth_w_(smoothness_weight) {
    // Bring the gravity residuals onto the map term's scale. The map term
    // sums thousands of unnormalized plane residuals whose rotational
    // information grows with pair count and lever arm, while a gravity
    // residual is a single unit-vector mismatch; left at unit weight it
    // could never influence attitude. A quasi-static gravity direction is
    // far more accurate than what the map planes pin down, so weight each
    // entry's gravity residual at parity with that entry's rotational
    // evidence from the map (frozen at construction, keeping the descent
    // objective fixed).
    std::vector<double> rot_evidence(poses_.size(), 0.0);
    for (const MapCorrespondence& m : corr_) {
      const Vec3 w = poses_[m.entry].apply(m.body);
      rot_evidence[m.entry] += w.cross(m.normal).squaredNorm() / 3.0;
    }
    for (std::size_t i = 0; i < gravity_.size(); ++i) {
      gravity_[i].second *= std::max(rot_evidence[i], 1.0);
    }
  }

  double cost(const std::vector<PoseSE3>& poses) const {
    double c = 0.0;
    for (const MapCorrespondence& m : corr_) {
      const Vec3 w = poses[m.entry].apply(m.body);
      const double r = m.normal.dot(w - m.target);
      c += r * r;
    }
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const auto& [dir, weight] = gravity_[i];
      if (weight <= 0.0) continue;
      const Vec3 r = poses[i].rotation.conjugate() * Vec3::UnitZ() - dir;
      c += weight * r.squaredNorm();
    }
    if (smooth_w_ > 0.0) {
      for (std::size_t i = 0; i + 2 < boundary_count(); ++i) {
        c += smooth_w_ * smooth_residual(poses, i).squaredNorm();
      }
    }
    return c;
  }

  /// One damped step; updates poses_ only when the objective (under the
  /// fixed correspondence set) does not increase. Returns the max pose
  /// update norm, or a negative value on singular equations.
  double step() {
    const std::size_t n = poses_.size();
    const Eigen::Index dim = static_cast<Eigen::Index>(6 * n);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);

    for (const MapCorrespondence& m : corr_) {
      const Vec3 w = poses_[m.entry].apply(m.body);
      const double r = m.normal.dot(w - m.target);
      Vec6 j;
      j.head<3>() = w.cross(m.normal);
      j.tail<3>() = m.normal;
      const auto at = static_cast<Eigen::Index>(6 * m.entry);
      h.block<6, 6>(at, at) += j * j.transpose();
      g.segment<6>(at) += j * r;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& [dir, weight] = gravity_[i];
      if (weight <= 0.0) continue;
      const Mat3 rt = poses_[i].rotation.conjugate().toRotationMatrix();
      const Vec3 r = rt * Vec3::UnitZ() - dir;
      const Mat3 j = rt * skew(Vec3::UnitZ());
      const auto at = static_cast<Eigen::Index>(6 * i);
      h.block<3, 3>(at, at) += weight * j.transpose() * j;
      g.segment<3>(at) += weight * j.transpose() * r;
    }
    if (smooth_w_ > 0.0) {
      for (std::size_t i = 0; i + 2 < boundary_count(); ++i) {
        add_smooth_block(i, h, g);
      }
    }

    const double cost0 = cost(poses_);
    double lambda = 1e-6;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::MatrixXd damped = h;
      damped.diagonal() +=
          lambda * (h.diagonal().array().abs() + 1e-9).matrix();
      const Eigen::VectorXd dx = damped.ldlt().solve(-g);
      if (!dx.allFinite()) return -1.0;
      std::vector<PoseSE3> candidate = poses_;
      double max_update = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const Vec6 d = dx.segment<6>(static_cast<Eigen::Index>(6 * i));
        candidate[i] = se3_exp(d) * candidate[i];
        max_update = std::max(max_update, d.norm());
      }
      if (cost(candidate) <= cost0) {
        poses_ = std::move(candidate);
        return max_update;
      }
      lambda *= 10.0;
    }
    return 0.0;  // no acceptable step; report convergence
  }

  const std::vector<PoseSE3>& poses() const { return poses_; }

 private:
  // Boundary b: first_start_ for b = 0, poses_[b-1] otherwise.
  std::size_t boundary_count() const { return poses_.size() + 1; }
  const PoseSE3& boundary(const std::vector<PoseSE3>& poses,
                          std::size_t b) const {
    return b == 0 ? first_start_ : poses[b - 1];
  }

  /// Constant-velocity residual over boundary triple (i, i+1, i+2).
  Vec6 smooth_residual(const std::vector<PoseSE3>& poses,
                       std::size_t i) const {
    const PoseSE3& a = boundary(poses, i);
    const PoseSE3& b = boundary(poses, i + 1);
    const PoseSE3& c = boundary(poses, i + 2);
    const PoseSE3 d01 = a.inverse() * b;
    const PoseSE3 d12 = b.inverse() * c;
    return se3_log(d01.inverse() * d12);
  }

  /// Numeric Jacobian of one smoothness residual (central differences on
  /// left-multiplicative twists of the involved states).
  void add_smooth_block(std::size_t i, Eigen::MatrixXd& h,
                        Eigen::VectorXd& g) const {
    const Vec6 r0 = smooth_residual(poses_, i);
    // States touched: poses_ indices b-1 for boundaries b in {i, i+1, i+2},
    // skipping the fixed boundary 0.
    std::vector<std::size_t> states;
    for (std::size_t b = i; b <= i + 2; ++b) {
      if (b > 0) states.push_back(b - 1);
    }
    std::vector<Eigen::Matrix<double, 6, 6>> jac(states.size());
    std::vector<PoseSE3> work = poses_;
    for (std::size_t s = 0; s < states.size(); ++s) {
      for (int k = 0; k < 6; ++k) {
        Vec6 d = Vec6::Zero();
        d[k] = kNumericStep;
        work[states[s]] = se3_exp(d) * poses_[states[s]];
        const Vec6 rp = smooth_residual(work, i);
        work[states[s]] = se3_exp(-d) * poses_[states[s]];
        const Vec6 rm = smooth_residual(work, i);
        work[states[s]] = poses_[states[s]];
        jac[s].col(k) = (rp - rm) / (2.0 * kNumericStep);
      }
    }
    for (std::size_t sa = 0; sa < states.size(); ++sa) {
      const auto ra = static_cast<Eigen::Index>(6 * states[sa]);
      g.segment<6>(ra) += smooth_w_ * jac[sa].transpose() * r0;
      for (std::size_t sb = 0; sb < states.size(); ++sb) {
        const auto rb = static_cast<Eigen::Index>(6 * states[sb]);
        h.block<6, 6>(ra, rb) += smooth_w_ * jac[sa].transpose() * jac[sb];
      }
    }
  }

  std::vector<PoseSE3> poses_;
  PoseSE3 first_start_;
  std::vector<MapCorrespondence> corr_;
  std::vector<std::pair<Vec3, double>> gravity_;
  double smooth_w_;
};

}  // namespace

void OdometryConfig::validate() const {
  if (!(horizon_s > 0.0)) throw ConfigError("odometry: horizon_s must be > 0");
  if (target_points_per_scan == 0) {
    throw ConfigError("odometry: target_points_per_scan must be >= 1");
  }
  if (!(keyframe_overlap_thresh > 0.0 && keyframe_overlap_thresh <= 1.0)) {
    throw ConfigError("odometry: keyframe_overlap_thresh must be in (0, 1]");
  }
  if (!(refine_overlap_thresh >= 0.0 && refine_overlap_thresh < 1.0)) {
    throw ConfigError("odometry: refine_overlap_thresh must be in [0, 1)");
  }
  if (!(keyframe_dist_thresh > 0.0)) {
    throw ConfigError("odometry: keyframe_dist_thresh must be > 0");
  }
  if (!(overlap_radius > 0.0)) {
    throw ConfigError("odometry: overlap_radius must be > 0");
  }
  if (!(gravity_weight >= 0.0) || !(motion_prior_weight >= 0.0)) {
    throw ConfigError("odometry: residual weights must be >= 0");
  }
  if (!(map_voxel > 0.0)) throw ConfigError("odometry: map_voxel must be > 0");
  if (!(corr_dist > 0.0)) throw ConfigError("odometry: corr_dist must be > 0");
  if (!(gravity_window_s > 0.0)) {
    throw ConfigError("odometry: gravity_window_s must be > 0");
  }
}

SlidingWindow::SlidingWindow(double horizon_s) : horizon_(horizon_s) {
  if (!(horizon_s > 0.0)) {
    throw std::invalid_argument("SlidingWindow: horizon must be > 0");
  }
}

std::vector<WindowEntry> SlidingWindow::push(WindowEntry entry) {
  entries_.push_back(std::move(entry));
  std::vector<WindowEntry> evicted;
  while (entries_.size() > 1 &&
         entries_.back().scan.sweep_end - entries_.front().scan.sweep_start >
             horizon_ + 1e-12) {
    evicted.push_back(std::move(entries_.front()));
    entries_.pop_front();
  }
  return evicted;
}

ScanFrame adaptive_downsample(const ScanFrame& scan, std::size_t target) {
  if (scan.points.empty()) {
    throw std::invalid_argument("adaptive_downsample: empty scan");
  }
  if (target == 0) {
    throw std::invalid_argument("adaptive_downsample: zero target");
  }
  if (scan.points.size() <= target) return scan;

  // Voxel keying happens in a fixed tilted frame. With a grid aligned to
  // the world axes, an axis-aligned surface shares a single boundary phase
  // across its whole extent: wherever a voxel boundary slices the range
  // noise band, every cell truncates the noise the same way, the per-cell
  // centroid offsets add coherently, and the downsampled surface shifts by
  // a sizeable fraction of the noise sigma. Tilting the grid sweeps that
  // phase across the surface, and the truncation offsets -- whose mean
  // over phase is exactly zero -- cancel in aggregate. Centroids commute
  // with rotation, so each representative is still the centroid of the
  // original points in its voxel.
  static const Quat kVoxelFrame = [] {
    Quat q = Quat(Eigen::AngleAxisd(0.628, Vec3::UnitZ())) *
             Quat(Eigen::AngleAxisd(0.449, Vec3::UnitY())) *
             Quat(Eigen::AngleAxisd(0.349, Vec3::UnitX()));
    q.normalize();
    return q;
  }();
  PointCloud tilted = scan.points;
  for (Vec3& p : tilted.points) p = kVoxelFrame * p;

  constexpr double kEdgeMin = 0.01;
  constexpr double kEdgeMax = 2.0;
  const auto band_lo = static_cast<std::size_t>(
      std::ceil(0.9 * static_cast<double>(target)));
  const auto band_hi = static_cast<std::size_t>(
      std::floor(1.1 * static_cast<double>(target)));
  const auto gap = [&](std::size_t count) {
    const auto t = static_cast<std::int64_t>(target);
    return std::abs(static_cast<std::int64_t>(count) - t);
  };

  double best_edge = kEdgeMax;
  std::size_t best_count = count_voxels(tilted, kEdgeMax);
  const std::size_t count_min_edge = count_voxels(tilted, kEdgeMin);
  if (gap(count_min_edge) < gap(best_count)) {
    best_edge = kEdgeMin;
    best_count = count_min_edge;
  }
  // Occupied-voxel count decreases as the edge grows; bisect for the band.
  if (!(best_count >= band_lo && best_count <= band_hi) &&
      count_min_edge > band_hi && count_voxels(tilted, kEdgeMax) <
                                      band_lo) {
    double lo = kEdgeMin, hi = kEdgeMax;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      const std::size_t c = count_voxels(tilted, mid);
      if (gap(c) < gap(best_count) ||
          (gap(c) == gap(best_count) && mid < best_edge)) {
        best_edge = mid;
        best_count = c;
      }
      if (c >= band_lo && c <= band_hi) break;
      if (c > band_hi) {
        lo = mid;  // too many points: grow the voxel
      } else {
        hi = mid;
      }
    }
  }

  ScanFrame out;
  out.points = voxel_downsample(tilted, best_edge);
  const Quat back = kVoxelFrame.conjugate();
  for (Vec3& p : out.points.points) p = back * p;
  out.sweep_start = scan.sweep_start;
  out.sweep_end = scan.sweep_end;
  return out;
}

PointCloud deskew_scan(const ScanFrame& scan, const PoseSE3& pose_start,
                       const PoseSE3& pose_end) {
  scan.validate();
  PointCloud out;
  out.points.resize(scan.points.size());
  out.times = scan.points.times;
  out.colors = scan.points.colors;
  parallel_for(0, scan.points.size(), [&](std::size_t i) {
    const PoseSE3 at =
        interpolate_pose(pose_start, pose_end, sweep_fraction(scan, i));
    out.points[i] = at.apply(scan.points.points[i]);
  });
  return out;
}

GravityEstimate estimate_gravity(const std::vector<ImuSample>& imu,
                                 double window_s) {
  if (imu.empty()) {
    throw DegenerateInputError("estimate_gravity: empty IMU window");
  }
  const double t_end = imu.back().t;
  const auto lo = std::lower_bound(
      imu.begin(), imu.end(), t_end - window_s,
      [](const ImuSample& s, double v) { return s.t < v; });
  const std::size_t n = static_cast<std::size_t>(imu.end() - lo);
  if (n < 10) {
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "estimate_gravity: %zu samples in window, need >= 10", n);
    throw DegenerateInputError(buf);
  }
  return gravity_from_range(&*lo, &*lo + n);
}

IcpResult register_scan(const PointCloud& scan_end_frame,
                        const RegistrationTarget& local_map,
                        const PoseSE3& init, const OdometryConfig& cfg) {
  IcpConfig icfg;
  icfg.variant = IcpVariant::point_to_plane;
  icfg.max_iterations = 30;
  icfg.max_corr_dist = 1.0;
  icfg.min_corr_dist = 0.2;
  icfg.convergence_eps = 1e-6;
  icfg.motion_prior_weight = cfg.motion_prior_weight;
  return icp(scan_end_frame, local_map, init, icfg);
}

namespace {

/// Registration for deskew-refresh passes, where the init is an already
/// near-converged pose. Restarting the full gate anneal from such a pose
/// re-admits the distant wrong matches the anneal exists to shed, and each
/// restart walks the pose by centimeters; a tight gate keeps the pass a
/// pure polish.
IcpResult register_scan_tight(const PointCloud& scan_end_frame,
                              const RegistrationTarget& local_map,
                              const PoseSE3& init, const OdometryConfig& cfg) {
  IcpConfig icfg;
  icfg.variant = IcpVariant::point_to_plane;
  icfg.max_iterations = 30;
  icfg.max_corr_dist = 0.3;
  icfg.min_corr_dist = 0.2;
  icfg.convergence_eps = 1e-6;
  icfg.motion_prior_weight = cfg.motion_prior_weight;
  return icp(scan_end_frame, local_map, init, icfg);
}

/// Rotation of the body frame from t0 to t1, accumulated from gyro samples
/// (zero-order hold between samples, clamped at the borders). Empty when
/// no sample lies near the interval.
std::optional<Quat> integrate_gyro(const std::vector<ImuSample>& imu,
                                   double t0, double t1) {
  if (imu.empty() || !(t1 > t0)) return std::nullopt;
  if (imu.front().t > t1 || imu.back().t < t0) return std::nullopt;
  auto it = std::lower_bound(
      imu.begin(), imu.end(), t0,
      [](const ImuSample& s, double t) { return s.t < t; });
  std::size_t i0 = static_cast<std::size_t>(it - imu.begin());
  if (i0 > 0) --i0;  // the sample whose rate holds at t0
  Quat q = Quat::Identity();
  for (std::size_t i = i0; i < imu.size(); ++i) {
    const double seg0 = i == i0 ? t0 : std::max(t0, imu[i].t);
    const double seg1 = i + 1 < imu.size() ? std::min(t1, imu[i + 1].t) : t1;
    if (seg1 <= seg0) {
      if (imu[i].t >= t1) break;
      continue;
    }
    const Vec3& w = imu[i].gyro;
    const double angle = w.norm() * (seg1 - seg0);
    if (angle > 0.0) {
      q = q * Quat(Eigen::AngleAxisd(angle, w.normalized()));
    }
  }
  q.normalize();
  return q;
}

/// Start boundary pose for deskewing a sweep: keeps the estimated relative
/// translation but substitutes the gyro-measured relative rotation when
/// one is available. Deskewing rotation from the pose chain feeds estimate
/// errors back into the compensated cloud -- an oscillating yaw error
/// warps the cloud azimuthally and registration inherits about half the
/// warp, which is how small errors compound. The gyro measurement is
/// immune to that loop.
PoseSE3 deskew_start(const PoseSE3& start_est, const PoseSE3& end_est,
                     const std::optional<Quat>& sweep_rot) {
  if (!sweep_rot) return start_est;
  PoseSE3 rel = start_est.inverse() * end_est;
  rel.rotation = *sweep_rot;
  return end_est * rel.inverse();
}

}  // namespace

WindowRefineResult window_refine(SlidingWindow& window,
                                 const RegistrationTarget& keyframe_map,
                                 const OdometryConfig& cfg) {
  WindowRefineResult result;
  if (window.empty()) {
    throw std::invalid_argument("window_refine: empty window");
  }

  const std::size_t n = window.size();
  std::vector<PoseSE3> poses(n);
  std::vector<std::pair<Vec3, double>> gravity(n);
  for (std::size_t i = 0; i < n; ++i) {
    poses[i] = window[i].pose_end;
    gravity[i] = {window[i].gravity.direction,
                  cfg.gravity_weight * window[i].gravity.confidence};
  }

  // Correspondences are established once at the current poses; the damped
  // Gauss-Newton then descends this fixed objective, so the final cost
  // never exceeds the initial one. Intra-sweep deskew is likewise frozen
  // at the current boundary estimates and map residuals are attributed to
  // each sweep's end pose.
  std::vector<MapCorrespondence> corr;
  for (std::size_t i = 0; i < n; ++i) {
    const WindowEntry& e = window[i];
    const PointCloud body =
        deskew_to_end(e.scan, e.pose_start, e.pose_end);
    const auto idx = budget_indices(body.size(), kRefineBudget);
    std::vector<MapCorrespondence> slots(idx.size());
    std::vector<char> ok(idx.size(), 0);
    parallel_for(0, idx.size(), [&](std::size_t k) {
      const Vec3 w = e.pose_end.apply(body.points[idx[k]]);
      const KdTree::Neighbor nb = keyframe_map.tree().nearest(w);
      if (nb.distance > cfg.corr_dist) return;
      const Vec3& normal = keyframe_map.normals()[nb.index];
      if (normal.squaredNorm() < 0.5) return;
      slots[k] = {i, body.points[idx[k]],
                  keyframe_map.cloud().points[nb.index], normal};
      ok[k] = 1;
    });
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (ok[k]) corr.push_back(slots[k]);
    }
  }

  WindowProblem problem(poses, window[0].pose_start, std::move(corr),
                        std::move(gravity), cfg.motion_prior_weight);
  result.initial_cost = problem.cost(problem.poses());
  for (result.iterations = 0; result.iterations < kGnMaxIterations;
       ++result.iterations) {
    const double update = problem.step();
    if (update < 0.0) {
      result.singular = true;  // leave the window poses untouched
      result.final_cost = result.initial_cost;
      return result;
    }
    if (update < kGnUpdateTol) {
      result.converged = true;
      ++result.iterations;
      break;
    }
  }
  result.final_cost = problem.cost(problem.poses());

  for (std::size_t i = 0; i < n; ++i) {
    window[i].pose_end = problem.poses()[i];
    if (i + 1 < n) window[i + 1].pose_start = problem.poses()[i];
  }
  return result;
}

bool keyframe_decision(const PoseSE3& pose, const PointCloud& scan_body,
                       const LidarKeyframe& last_kf,
                       const OdometryConfig& cfg) {
  if (pose.translation_distance_to(last_kf.pose) > cfg.keyframe_dist_thresh) {
    return true;
  }
  const PointCloud cur_world = scan_body.transformed(pose);
  const PointCloud kf_world = last_kf.points.transformed(last_kf.pose);
  return overlap_ratio(cur_world, kf_world, cfg.overlap_radius) <
         cfg.keyframe_overlap_thresh;
}

namespace {

/// Pairwise point-to-plane refinement state for selected keyframes.
struct PairCorrespondence {
  std::size_t src_state = 0;  ///< index into `selected`
  std::size_t dst_state = 0;
  Vec3 src_body = Vec3::Zero();
  Vec3 dst_body = Vec3::Zero();
  Vec3 dst_normal_body = Vec3::Zero();
};

double pair_cost(const std::vector<PoseSE3>& poses,
                 const std::vector<PairCorrespondence>& corr) {
  double c = 0.0;
  for (const PairCorrespondence& pc : corr) {
    const Vec3 wa = poses[pc.src_state].apply(pc.src_body);
    const Vec3 wb = poses[pc.dst_state].apply(pc.dst_body);
    const Vec3 nw = poses[pc.dst_state].rotation * pc.dst_normal_body;
    const double r = nw.dot(wa - wb);
    c += r * r;
  }
  return c;
}

}  // namespace

std::size_t keyframe_map_refine(std::vector<LidarKeyframe>& keyframes,
                                std::size_t new_kf_id,
                                const OdometryConfig& cfg) {
  std::size_t new_index = keyframes.size();
  for (std::size_t i = 0; i < keyframes.size(); ++i) {
    if (keyframes[i].id == new_kf_id) new_index = i;
  }
  if (new_index == keyframes.size()) {
    throw std::invalid_argument("keyframe_map_refine: unknown keyframe id");
  }
  if (keyframes.size() < 2) return 0;

  // Neighbor selection: overlap with the new keyframe in the world frame.
  const PointCloud new_world =
      keyframes[new_index].points.transformed(keyframes[new_index].pose);
  const KdTree new_tree(new_world.points);
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < keyframes.size(); ++i) {
    if (i == new_index) continue;
    const PointCloud world = keyframes[i].points.transformed(keyframes[i].pose);
    if (overlap_ratio(world, new_tree, cfg.overlap_radius) >
        cfg.refine_overlap_thresh) {
      selected.push_back(i);
    }
  }
  if (selected.empty()) return 0;
  selected.push_back(new_index);
  std::sort(selected.begin(), selected.end());

  // Body-frame normals once per selected keyframe (viewpoint: the sensor).
  std::vector<std::vector<Vec3>> normals(selected.size());
  std::vector<PointCloud> budget(selected.size());
  for (std::size_t s = 0; s < selected.size(); ++s) {
    const PointCloud& body = keyframes[selected[s]].points;
    normals[s] = keyframe_body_normals(body);
    budget[s] = stride_subsample(body, kKeyframeRefineBudget);
  }

  std::vector<PoseSE3> poses(selected.size());
  std::vector<PoseSE3> initial(selected.size());
  for (std::size_t s = 0; s < selected.size(); ++s) {
    poses[s] = initial[s] = keyframes[selected[s]].pose;
  }

  // The lowest-id selected keyframe anchors the gauge.
  const std::size_t anchor = 0;

  for (int round = 0; round < 3; ++round) {
    // Re-associate at the current poses, then descend the fixed objective.
    std::vector<KdTree> trees(selected.size());
    for (std::size_t s = 0; s < selected.size(); ++s) {
      trees[s] =
          KdTree(keyframes[selected[s]].points.transformed(poses[s]).points);
    }
    std::vector<PairCorrespondence> corr;
    for (std::size_t sa = 0; sa < selected.size(); ++sa) {
      for (std::size_t sb = 0; sb < selected.size(); ++sb) {
        if (sa == sb) continue;
        const PointCloud& src = budget[sa];
        std::vector<PairCorrespondence> slots(src.size());
        std::vector<char> ok(src.size(), 0);
        parallel_for(0, src.size(), [&](std::size_t k) {
          const Vec3 w = poses[sa].apply(src.points[k]);
          const KdTree::Neighbor nb = trees[sb].nearest(w);
          if (nb.distance > cfg.corr_dist) return;
          const Vec3& n_body = normals[sb][nb.index];
          if (n_body.squaredNorm() < 0.5) return;
          slots[k] = {sa, sb, src.points[k],
                      keyframes[selected[sb]].points.points[nb.index], n_body};
          ok[k] = 1;
        });
        for (std::size_t k = 0; k < src.size(); ++k) {
          if (ok[k]) corr.push_back(slots[k]);
        }
      }
    }
    if (corr.empty()) break;

    for (int iter = 0; iter < kGnMaxIterations; ++iter) {
      const Eigen::Index dim = static_cast<Eigen::Index>(6 * selected.size());
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
      Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
      for (const PairCorrespondence& pc : corr) {
        const Vec3 wa = poses[pc.src_state].apply(pc.src_body);
        const Vec3 wb = poses[pc.dst_state].apply(pc.dst_body);
        const Vec3 nw = poses[pc.dst_state].rotation * pc.dst_normal_body;
        const double r = nw.dot(wa - wb);
        // Left-multiplicative twists; the normal's own rotation cancels
        // against the moving target point, leaving +-(wa x n, n).
        Vec6 j;
        j.head<3>() = wa.cross(nw);
        j.tail<3>() = nw;
        const auto ia = static_cast<Eigen::Index>(6 * pc.src_state);
        const auto ib = static_cast<Eigen::Index>(6 * pc.dst_state);
        h.block<6, 6>(ia, ia) += j * j.transpose();
        h.block<6, 6>(ib, ib) += j * j.transpose();
        h.block<6, 6>(ia, ib) -= j * j.transpose();
        h.block<6, 6>(ib, ia) -= j * j.transpose();
        g.segment<6>(ia) += j * r;
        g.segment<6>(ib) -= j * r;
      }
      // Fix the anchor by zeroing its rows/cols and pinning the diagonal.
      const auto a0 = static_cast<Eigen::Index>(6 * anchor);
      h.block(a0, 0, 6, dim).setZero();
      h.block(0, a0, dim, 6).setZero();
      h.block<6, 6>(a0, a0) = Mat6::Identity();
      g.segment<6>(a0).setZero();

      const double cost0 = pair_cost(poses, corr);
      double lambda = 1e-6;
      bool accepted = false;
      double max_update = 0.0;
      for (int attempt = 0; attempt < 8 && !accepted; ++attempt) {
        Eigen::MatrixXd damped = h;
        damped.diagonal() +=
            lambda * (h.diagonal().array().abs() + 1e-9).matrix();
        const Eigen::VectorXd dx = damped.ldlt().solve(-g);
        if (!dx.allFinite()) break;
        std::vector<PoseSE3> candidate = poses;
        max_update = 0.0;
        for (std::size_t s = 0; s < selected.size(); ++s) {
          if (s == anchor) continue;
          const Vec6 d = dx.segment<6>(static_cast<Eigen::Index>(6 * s));
          candidate[s] = se3_exp(d) * candidate[s];
          max_update = std::max(max_update, d.norm());
        }
        if (pair_cost(candidate, corr) <= cost0) {
          poses = std::move(candidate);
          accepted = true;
        } else {
          lambda *= 10.0;
        }
      }
      if (!accepted || max_update < kGnUpdateTol) break;
    }
  }

  std::size_t moved = 0;
  for (std::size_t s = 0; s < selected.size(); ++s) {
    LidarKeyframe& kf = keyframes[selected[s]];
    if (initial[s].translation_distance_to(poses[s]) > 1e-9 ||
        initial[s].rotation_angle_to(poses[s]) > 1e-9) {
      ++moved;
    }
    kf.pose = poses[s];
  }
  return moved;
}

ScanSource scan_source_from_dir(const std::filesystem::path& scans_dir) {
  auto index = std::make_shared<ScanIndex>(
      load_scan_index(scans_dir / "index.json"));
  ScanSource source;
  source.count = index->scans.size();
  source.fetch = [index, scans_dir](std::size_t k) {
    const ScanIndexEntry& entry = index->scans.at(k);
    ScanFrame frame;
    frame.points = load_point_cloud(scans_dir / entry.file);
    frame.sweep_start = entry.t0;
    frame.sweep_end = entry.t1;
    return frame;
  };
  return source;
}

namespace {

/// World-frame map target over all keyframes, reusing cached body normals.
RegistrationTarget build_map_target(
    const std::vector<LidarKeyframe>& keyframes,
    const std::vector<std::vector<Vec3>>& body_normals) {
  PointCloud cloud;
  std::vector<Vec3> normals;
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    const Mat3 r = keyframes[k].pose.rotation_matrix();
    for (std::size_t i = 0; i < keyframes[k].points.size(); ++i) {
      cloud.points.push_back(keyframes[k].pose.apply(
          keyframes[k].points.points[i]));
      const Vec3& n = body_normals[k][i];
      normals.push_back(n.squaredNorm() < 0.5 ? Vec3::Zero() : Vec3(r * n));
    }
  }
  return RegistrationTarget(std::move(cloud), std::move(normals));
}

}  // namespace

OdometryResult run_lidar_odometry(const ScanSource& scans,
                                  const std::vector<ImuSample>& imu,
                                  const OdometryConfig& cfg) {
  cfg.validate();
  if (scans.count == 0) {
    throw std::invalid_argument("run_lidar_odometry: no scans");
  }
  for (std::size_t i = 1; i < imu.size(); ++i) {
    if (imu[i].t < imu[i - 1].t) {
      throw std::invalid_argument("run_lidar_odometry: IMU not time-sorted");
    }
  }

  auto result = std::make_shared<OdometryResult>();
  std::vector<LidarKeyframe>& keyframes = result->keyframes;
  std::vector<std::vector<Vec3>> kf_normals;
  std::unique_ptr<RegistrationTarget> map_target;
  SlidingWindow window(cfg.horizon_s);
  std::deque<std::size_t> window_scan;  // trajectory index per window entry
  double prev_sweep_start = -std::numeric_limits<double>::infinity();

  const auto snapshot_map = [&]() {
    PointCloud map;
    for (const LidarKeyframe& kf : keyframes) {
      map.append(PointCloud{
          kf.points.transformed(kf.pose).points, {}, {}});
    }
    return map.empty() ? map : voxel_downsample(map, cfg.map_voxel);
  };

  for (std::size_t k = 0; k < scans.count; ++k) {
    ScanFrame raw = scans.fetch(k);
    raw.validate();
    if (raw.sweep_start < prev_sweep_start) {
      throw std::invalid_argument("run_lidar_odometry: scans not time-sorted");
    }
    prev_sweep_start = raw.sweep_start;
    const ScanFrame ds = adaptive_downsample(raw, cfg.target_points_per_scan);
    const std::optional<GravityEstimate> g =
        gravity_near(imu, ds.sweep_end, cfg.gravity_window_s);
    const std::optional<Quat> sweep_rot =
        integrate_gyro(imu, ds.sweep_start, ds.sweep_end);

    if (k == 0) {
      PoseSE3 init0;
      if (g) {
        // Roll/pitch from gravity: rotate the measured body-frame up
        // direction onto world +z.
        init0.rotation = rotation_between(g->direction, Vec3::UnitZ());
      } else {
        result->warnings.push_back(
            "no usable IMU window at start; assuming a level platform");
      }
      // No velocity estimate exists yet, so the first sweep keeps its
      // translational smear (repaired after the next scan), but the
      // rotational part can already be compensated from the gyro.
      const PoseSE3 start0 = deskew_start(init0, init0, sweep_rot);
      WindowEntry entry{ds, start0, init0,
                        g.value_or(GravityEstimate{Vec3::UnitZ(), 0.0}),
                        sweep_rot};
      window.push(std::move(entry));
      window_scan.push_back(0);
      result->trajectory.push_back({ds.sweep_end, init0});

      LidarKeyframe kf;
      kf.id = 0;
      kf.pose = init0;
      kf.points = deskew_to_end(ds, start0, init0);
      kf.gravity_dir =
          g ? g->direction : Vec3(init0.rotation.conjugate() * Vec3::UnitZ());
      kf.t = ds.sweep_end;
      keyframes.push_back(std::move(kf));
      kf_normals.push_back(keyframe_body_normals(keyframes.back().points));
      map_target = std::make_unique<RegistrationTarget>(
          build_map_target(keyframes, kf_normals));
      continue;
    }

    // Constant-velocity prediction from the last two sweep-end poses.
    const PoseSE3 prev_end = result->trajectory.back().pose;
    PoseSE3 rel;
    if (result->trajectory.size() >= 2) {
      const PoseSE3& before =
          result->trajectory[result->trajectory.size() - 2].pose;
      rel = before.inverse() * prev_end;
    }
    const PoseSE3 predicted = prev_end * rel;

    PointCloud body_end =
        deskew_to_end(ds, deskew_start(prev_end, predicted, sweep_rot),
                      predicted);
    IcpResult reg;
    try {
      reg = register_scan(body_end, *map_target, predicted, cfg);
      // Re-deskew with the corrected end pose and register again until
      // the estimate settles: a single pass bakes the prediction's error
      // into the compensated cloud. Skipped on the bootstrap pair (k==1),
      // where the map is still undeskewed: there the raw-on-raw match is
      // self-consistent (both clouds carry the same smear), while a
      // deskewed scan against the smeared map is biased.
      for (int pass = 0; k >= 2 && pass < 4; ++pass) {
        const PoseSE3 before = reg.transform;
        body_end = deskew_to_end(
            ds, deskew_start(prev_end, before, sweep_rot), before);
        reg = register_scan_tight(body_end, *map_target, before, cfg);
        if (reg.transform.translation_distance_to(before) < 1e-4 &&
            reg.transform.rotation_angle_to(before) < 1e-5) {
          break;
        }
      }
    } catch (const NoOverlapError& e) {
      result->map = snapshot_map();
      char buf[128];
      std::snprintf(buf, sizeof(buf),
                    "tracking lost at scan %zu (t=%.3f): ", k, ds.sweep_end);
      throw OdometryAbort(std::string(buf) + e.what(), result);
    }

    WindowEntry entry{ds, deskew_start(prev_end, reg.transform, sweep_rot),
                      reg.transform,
                      g.value_or(GravityEstimate{Vec3::UnitZ(), 0.0}),
                      sweep_rot};
    const auto evicted = window.push(std::move(entry));
    for (std::size_t i = 0; i < evicted.size(); ++i) window_scan.pop_front();
    window_scan.push_back(k);
    result->trajectory.push_back({ds.sweep_end, reg.transform});

    if (k == 1) {
      // Bootstrap repair. The first sweep was stored undeskewed (no
      // velocity estimate existed yet), so if the platform was moving the
      // anchor keyframe -- and with it the whole map -- is smeared by the
      // intra-sweep motion. The raw-on-raw registration above is immune
      // to that smear (both clouds carry the same one, so it cancels in
      // the relative pose); trust it as a velocity estimate, extrapolate
      // backward across sweep 0, re-deskew the anchor keyframe, and redo
      // scan 1 with motion compensation against the repaired map. A
      // second round lets the improved scan-1 pose tighten the velocity.
      for (int round = 0; round < 2; ++round) {
        const PoseSE3 end0 = window[0].pose_end;
        const PoseSE3 end1 = window[1].pose_end;
        const double gap =
            window[1].scan.sweep_end - window[0].scan.sweep_end;
        const double span0 =
            window[0].scan.sweep_end - window[0].scan.sweep_start;
        if (gap <= 1e-9 || span0 <= 0.0) break;
        Vec6 xi;
        try {
          xi = se3_log(end0.inverse() * end1);
        } catch (const DegenerateInputError&) {
          break;
        }
        const PoseSE3 start0 =
            deskew_start(end0 * se3_exp(Vec6(-(span0 / gap) * xi)), end0,
                         window[0].sweep_rot);
        window[0].pose_start = start0;
        keyframes[0].points =
            deskew_to_end(window[0].scan, start0, end0);
        keyframes[0].pose = end0;
        kf_normals[0] = keyframe_body_normals(keyframes[0].points);
        map_target = std::make_unique<RegistrationTarget>(
            build_map_target(keyframes, kf_normals));

        const PoseSE3 start1 = window[1].pose_start;
        PoseSE3 cur = window[1].pose_end;
        bool lost = false;
        try {
          for (int pass = 0; pass < 4; ++pass) {
            const PoseSE3 before = cur;
            body_end = deskew_to_end(
                ds, deskew_start(start1, before, sweep_rot), before);
            cur = register_scan_tight(body_end, *map_target, before, cfg)
                      .transform;
            if (cur.translation_distance_to(before) < 1e-4 &&
                cur.rotation_angle_to(before) < 1e-5) {
              break;
            }
          }
        } catch (const NoOverlapError&) {
          lost = true;  // keep the pre-repair estimate
        }
        if (lost) break;
        window[1].pose_end = cur;
        window[1].pose_start = deskew_start(start1, cur, sweep_rot);
        result->trajectory[window_scan[1]].pose = cur;
      }
    }

    const WindowRefineResult wr = window_refine(window, *map_target, cfg);
    if (wr.singular) {
      char buf[96];
      std::snprintf(buf, sizeof(buf),
                    "window refinement singular at scan %zu; keeping "
                    "registration poses",
                    k);
      result->warnings.push_back(buf);
    }
    for (std::size_t i = 0; i < window.size(); ++i) {
      result->trajectory[window_scan[i]].pose = window[i].pose_end;
    }
    // Refinement rechains each start boundary to the previous refined end;
    // re-impose the gyro-measured sweep rotation so later re-deskews of
    // these entries stay free of estimate feedback.
    for (std::size_t i = 0; i < window.size(); ++i) {
      window[i].pose_start = deskew_start(
          window[i].pose_start, window[i].pose_end, window[i].sweep_rot);
    }

    const PoseSE3 end_pose = window.back().pose_end;
    if (keyframe_decision(end_pose, body_end, keyframes.back(), cfg)) {
      LidarKeyframe kf;
      kf.id = keyframes.back().id + 1;
      kf.pose = end_pose;
      kf.points = deskew_to_end(ds, window.back().pose_start, end_pose);
      kf.gravity_dir =
          g ? g->direction
            : Vec3(end_pose.rotation.conjugate() * Vec3::UnitZ());
      kf.t = ds.sweep_end;
      keyframes.push_back(std::move(kf));
      kf_normals.push_back(keyframe_body_normals(keyframes.back().points));

      const std::size_t moved =
          keyframe_map_refine(keyframes, keyframes.back().id, cfg);
      if (moved > 0 && keyframes.back().pose.translation_distance_to(
                           end_pose) > 1e-12) {
        // Feed the refined keyframe pose back into the odometry chain.
        window.back().pose_end = keyframes.back().pose;
        window.back().pose_start =
            deskew_start(window.back().pose_start, window.back().pose_end,
                         window.back().sweep_rot);
        result->trajectory.back().pose = keyframes.back().pose;
      }
      map_target = std::make_unique<RegistrationTarget>(
          build_map_target(keyframes, kf_normals));
    }
  }

  result->map = snapshot_map();
  return *result;
}

OdometryResult run_lidar_odometry(const std::vector<ScanFrame>& scans,
                                  const std::vector<ImuSample>& imu,
                                  const OdometryConfig& cfg) {
  ScanSource source;
  source.count = scans.size();
  source.fetch = [&scans](std::size_t k) { return scans[k]; };
  return run_lidar_odometry(source, imu, cfg);
}

}  // namespace hallmap
