// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0
//
// Fuse four per-camera visual-odometry streams into one consistent body
// trajectory and dense map: flow-based keyframe selection, extrinsic
// transfer to the rig body frame, Sim3 stream anchoring, pose-graph
// adjustment with ICP-verified loop closures, global scale correction,
// and depth-map fusion.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hallmap/geometry.hpp"
#include "hallmap/point_cloud.hpp"
#include "hallmap/registration.hpp"
#include "hallmap/sensor_data.hpp"

namespace hallmap {

// ---------------------------------------------------------------------------
// Keyframes
// ---------------------------------------------------------------------------

/// One camera frame of a visual-odometry stream, before keyframe selection.
struct CameraFrame {
  std::string camera_id;
  Timestamp t = 0.0;
  PoseSE3 pose_cam_in_stream;  ///< camera pose in this stream's world frame
  double flow_px = 0.0;        ///< mean feature displacement since previous frame
  std::filesystem::path depth_file;  ///< empty when no depth image stored
};

/// A selected keyframe with its (lazily loadable) depth.
struct CameraKeyframe {
  std::string camera_id;
  Timestamp t = 0.0;
  PoseSE3 pose_cam_in_stream;
  DepthMap depth;  ///< may be empty (width == 0) when no depth available
  CameraIntrinsics intrinsics;
};

/// Greedy flow-based selection: frame 0 is always admitted; afterwards a
/// frame is admitted when the accumulated per-frame mean displacement since
/// the last keyframe reaches tau_flow pixels. `flow_px[i]` is the mean
/// displacement between frames i-1 and i (element 0 is ignored). Returns
/// admitted frame indices in order.
std::vector<std::size_t> keyframe_select(const std::vector<double>& flow_px,
                                         double tau_flow = 16.0);

/// Body pose (in the keyframe's stream world) from the camera pose:
/// T_world_body = T_world_cam ∘ inverse(T_body_cam). Throws ConfigError on
/// an unknown camera id.
PoseSE3 to_body_frame(const CameraKeyframe& kf, const RigCalibration& rig);

/// Backproject every valid depth pixel (optionally strided) into the
/// camera optical frame: ((u-cx)·d/fx, (v-cy)·d/fy, d).
PointCloud backproject_depth(const DepthMap& depth,
                             const CameraIntrinsics& intrinsics,
                             int pixel_stride = 1);

// ---------------------------------------------------------------------------
// Stream anchoring
// ---------------------------------------------------------------------------

/// Per-stream body trajectories (keyframe times) in their own world frames.
using StreamTrajectories = std::map<std::string, Trajectory>;

/// Anchor every stream to the reference stream's world frame: the
/// reference anchor is identity; each other anchor is the similarity (or
/// rigid transform when with_scale is false) minimizing the distance
/// between time-interpolated body positions of the stream and the
/// reference. Throws ConfigError when the reference stream is missing and
/// DegenerateInputError when fewer than 3 time-matched samples exist.
std::map<std::string, Sim3Transform> align_streams(
    const StreamTrajectories& streams, const std::string& reference = "front",
    bool with_scale = true);

// ---------------------------------------------------------------------------
// Pose graph
// ---------------------------------------------------------------------------

enum class EdgeKind { odometry, loop };

struct PoseGraphEdge {
  EdgeKind kind = EdgeKind::odometry;
  std::size_t i = 0;
  std::size_t j = 0;
  PoseSE3 measurement;  ///< Z_ij: pose of node j expressed in node i's frame
  Mat6 information = Mat6::Identity();
};

/// Which camera keyframe a node was built from.
struct NodeObservation {
  std::string camera_id;
  std::size_t keyframe_index = 0;  ///< index into that camera's keyframe list
};

struct PoseGraphNode {
  Timestamp t = 0.0;
  PoseSE3 pose;  ///< body in the anchored (reference) world frame
  std::vector<NodeObservation> observations;
};

struct PoseGraph {
  std::vector<PoseGraphNode> nodes;  ///< time-ordered
  std::vector<PoseGraphEdge> edges;
  std::size_t fixed_node = 0;
};

/// Build the graph from anchored per-camera body keyframe trajectories:
/// nodes at keyframe timestamps, merged across cameras when |Δt| ≤
/// merge_tol; odometry edges between consecutive keyframes of each stream
/// (measurement from their anchored relative pose); first node fixed.
/// Throws DegenerateInputError when all streams are empty.
PoseGraph build_pose_graph(
    const std::map<std::string, Trajectory>& anchored_body_keyframes,
    double merge_tol = 0.010, double odometry_information = 1e4);

struct LoopClosureConfig {
  double max_distance = 2.0;    ///< meters between node positions
  double min_time_gap = 30.0;   ///< seconds, unless cross-camera
  double min_cross_camera_gap = 1.0;  ///< seconds, for cross-camera pairs
  double max_rmse = 0.1;        ///< meters, ICP acceptance
  double min_inlier_fraction = 0.5;
  IcpConfig icp;                ///< point-to-point verification settings
  LoopClosureConfig() {
    icp.max_iterations = 30;
    icp.max_corr_dist = 1.0;
    icp.min_corr_dist = 0.2;
  }
};

/// Find and verify loop-closure edges. `node_clouds[i]` is a body-frame
/// point cloud observed at node i (empty clouds are skipped). Candidate
/// pairs lie within max_distance and are separated by min_time_gap seconds
/// or observed by disjoint camera sets; each is verified with
/// point-to-point ICP and accepted when converged with rmse ≤ max_rmse and
/// inlier fraction ≥ min_inlier_fraction. Information is scaled by the
/// matched-point count.
std::vector<PoseGraphEdge> detect_loop_closures(
    const PoseGraph& graph, const std::vector<PointCloud>& node_clouds,
    const LoopClosureConfig& cfg = {});

struct OptimizeConfig {
  double huber_delta = 0.1;
  int max_iterations = 100;
  double update_tolerance = 1e-6;
};

struct OptimizeResult {
  std::vector<double> cost_history;  ///< robust cost per accepted iteration
  int iterations = 0;
  bool converged = false;
};

/// Robust pose-graph adjustment: minimize Σ ρ(‖log(Z_ij⁻¹ X_i⁻¹ X_j)‖²_Λ)
/// with Huber ρ, Levenberg-Marquardt on SE(3) (left-multiplicative
/// increments), the fixed node pinned. Node poses are updated in place;
/// the robust cost never increases. Throws DegenerateInputError when the
/// graph is disconnected (message reports component count and sizes).
OptimizeResult optimize_pose_graph(PoseGraph& graph,
                                   const OptimizeConfig& cfg = {});

// ---------------------------------------------------------------------------
// Scale correction and depth fusion
// ---------------------------------------------------------------------------

struct ScaleCorrection {
  Sim3Transform transform;  ///< maps estimate coordinates into reference
  std::size_t matches = 0;
  double rms_residual = 0.0;  ///< after applying the correction
};

/// Similarity correction from time-matched trajectory positions
/// (|Δt| ≤ max_dt). Throws DegenerateInputError for < 3 matches or when
/// the post-fit residual exceeds residual_fraction of the reference spread
/// (which rejects reflected or unrelated inputs).
ScaleCorrection correct_global_scale(const Trajectory& estimate,
                                     const Trajectory& reference,
                                     double max_dt = 0.05,
                                     double residual_fraction = 0.25);

/// Same, from clouds: rigid ICP (from `init`) pairs the clouds, then a
/// similarity fit on the final correspondences yields the correction.
ScaleCorrection correct_global_scale(const PointCloud& estimate,
                                     const PointCloud& reference,
                                     const PoseSE3& init = PoseSE3::identity(),
                                     double residual_fraction = 0.25);

/// Fuse keyframe depth maps into one voxel-downsampled world cloud.
/// `body_poses[k]` is the optimized body pose for keyframes[k]; each valid
/// pixel is backprojected, moved by body ∘ extrinsic, and accumulated.
PointCloud fuse_depth_maps(const std::vector<CameraKeyframe>& keyframes,
                           const std::vector<PoseSE3>& body_poses,
                           const RigCalibration& rig, double voxel = 0.02,
                           int pixel_stride = 1);

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

struct RigFusionConfig {
  double tau_flow = 16.0;
  double merge_tol = 0.010;       ///< node merge tolerance, seconds
  LoopClosureConfig loop;
  OptimizeConfig optimize;
  double fusion_voxel = 0.02;     ///< meters
  int pixel_stride = 2;           ///< depth fusion pixel stride
  int loop_cloud_target = 4000;   ///< points per node cloud for verification
  bool anchor_with_scale = true;  ///< Sim3 (vs SE3) stream anchors
  double scale_match_dt = 0.05;   ///< seconds, scale-correction matching
  double scale_residual_fraction = 0.25;
};

struct RigFusionResult {
  PoseGraph graph;                 ///< optimized
  Trajectory body_trajectory;      ///< optimized body poses, time-ordered
  PointCloud fused_map;            ///< world frame, scale-corrected when done
  std::map<std::string, Sim3Transform> anchors;
  Sim3Transform scale_correction;  ///< identity unless a reference was given
  bool scale_corrected = false;
  std::vector<double> cost_history;
  std::size_t loop_edges = 0;
  std::vector<std::string> warnings;
};

/// Full pipeline over per-camera frame streams (time-ordered per camera):
/// keyframe selection, body transfer, anchoring, graph construction, loop
/// closure, optimization, optional scale correction against a reference
/// body trajectory, and depth fusion. Depth images are loaded on demand
/// from CameraFrame::depth_file.
RigFusionResult run_rig_fusion(
    const std::map<std::string, std::vector<CameraFrame>>& streams,
    const RigCalibration& rig,
    const std::map<std::string, CameraIntrinsics>& intrinsics,
    const RigFusionConfig& cfg = {},
    const Trajectory* scale_reference = nullptr);

}  // namespace hallmap
