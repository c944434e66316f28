// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include "hallmap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include <json.hpp>

#include "hallmap/dataset.hpp"
#include "hallmap/errors.hpp"
#include "hallmap/io.hpp"
#include "hallmap/parallel.hpp"
#include "hallmap/rig_fusion.hpp"

namespace hallmap {

namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

// Fixed RNG stream ids so every consumer draws from a disjoint counter
// space regardless of emission order.
constexpr std::uint64_t kHallStream = 0x48414c4c;    // hall layout
constexpr std::uint64_t kLidarStream = 0x4c494441;   // range noise
constexpr std::uint64_t kImuStream = 0x494d5530;     // imu noise
constexpr std::uint64_t kDepthStream = 0x44505400;   // +camera index
constexpr std::uint64_t kVoStream = 0x564f4400;      // +camera index
constexpr std::uint64_t kParamStream = 0x50415241;   // per-stream drift params

double wrap_pi(double a) {
  a = std::fmod(a + pi, 2.0 * pi);
  if (a < 0) a += 2.0 * pi;
  return a - pi;
}

/// 2D distance from (px, py) to the segment a-b (z ignored).
double segment_distance_2d(const Vec3& a, const Vec3& b, double px,
                           double py) {
  const double abx = b.x() - a.x();
  const double aby = b.y() - a.y();
  const double l2 = abx * abx + aby * aby;
  double s = 0.0;
  if (l2 > 0.0) {
    s = ((px - a.x()) * abx + (py - a.y()) * aby) / l2;
    s = std::clamp(s, 0.0, 1.0);
  }
  const double dx = a.x() + s * abx - px;
  const double dy = a.y() + s * aby - py;
  return std::hypot(dx, dy);
}

double route_distance_2d(const std::vector<Vec3>& route, double px,
                         double py) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < route.size(); ++k) {
    best = std::min(best, segment_distance_2d(route[k], route[k + 1], px, py));
  }
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// Box geometry
// ---------------------------------------------------------------------------

double box_surface_distance(const Box& box, const Vec3& p) {
  Vec3 outside = Vec3::Zero();
  bool inside = true;
  for (int a = 0; a < 3; ++a) {
    const double below = box.min[a] - p[a];
    const double above = p[a] - box.max[a];
    const double d = std::max(below, above);
    if (d > 0.0) {
      outside[a] = d;
      inside = false;
    }
  }
  if (!inside) return outside.norm();
  double to_face = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    to_face = std::min({to_face, p[a] - box.min[a], box.max[a] - p[a]});
  }
  return to_face;
}

RayHit box_raycast(const Box& box, const Vec3& origin, const Vec3& dir,
                   double max_range) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int near_axis = -1;
  double near_sign = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double d = dir[a];
    if (std::abs(d) < 1e-15) {
      if (origin[a] < box.min[a] || origin[a] > box.max[a]) return {};
      continue;
    }
    double t0 = (box.min[a] - origin[a]) / d;
    double t1 = (box.max[a] - origin[a]) / d;
    double sign = -1.0;  // entering through the min face
    if (t0 > t1) {
      std::swap(t0, t1);
      sign = 1.0;  // entering through the max face
    }
    if (t0 > t_near) {
      t_near = t0;
      near_axis = a;
      near_sign = sign;
    }
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return {};
  }
  // Rays starting inside the solid (t_near <= 0) do not count as hits:
  // sensors only ever cast from free space.
  if (near_axis < 0 || !(t_near > 1e-9) || t_near > max_range) return {};
  RayHit hit;
  hit.hit = true;
  hit.range = t_near;
  hit.normal[near_axis] = near_sign;
  return hit;
}

// ---------------------------------------------------------------------------
// HallModel
// ---------------------------------------------------------------------------

RayHit HallModel::raycast(const Vec3& origin, const Vec3& dir,
                          double max_range) const {
  RayHit best;
  double limit = max_range;
  for (const Box& solid : solids) {
    const RayHit hit = box_raycast(solid, origin, dir, limit);
    if (hit.hit) {
      best = hit;
      limit = hit.range;
    }
  }
  return best;
}

double HallModel::distance_to_surface(const Vec3& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const Box& solid : solids) {
    best = std::min(best, box_surface_distance(solid, p));
  }
  return best;
}

bool HallModel::inside_solid(const Vec3& p) const {
  for (const Box& solid : solids) {
    if (solid.contains(p)) return true;
  }
  return false;
}

bool HallModel::in_free_space(const Vec3& p, double clearance) const {
  return interior.contains(p) && !inside_solid(p) &&
         distance_to_surface(p) >= clearance;
}

HallModel build_hall(std::uint64_t seed) {
  const CounterRng rng(seed, kHallStream);
  std::uint64_t counter = 0;
  auto draw = [&] { return rng.uniform(counter++); };

  HallModel hall;
  const double width = 40.0, depth = 40.0, height = 8.0, shell = 0.5;
  hall.interior = {{0.0, 0.0, 0.0}, {width, depth, height}};

  // Enclosing shell: floor, ceiling, four walls (overlapping corners are
  // fine for a solid union).
  hall.solids.push_back(
      {{-shell, -shell, -shell}, {width + shell, depth + shell, 0.0}});
  hall.solids.push_back(
      {{-shell, -shell, height}, {width + shell, depth + shell, height + shell}});
  hall.solids.push_back({{-shell, -shell, 0.0}, {0.0, depth + shell, height}});
  hall.solids.push_back(
      {{width, -shell, 0.0}, {width + shell, depth + shell, height}});
  hall.solids.push_back({{-shell, -shell, 0.0}, {width + shell, 0.0, height}});
  hall.solids.push_back(
      {{-shell, depth, 0.0}, {width + shell, depth + shell, height}});

  // A narrow corridor: two full-height walls with a < 2 m gap.
  const double corridor_width = 1.4 + 0.4 * draw();
  const double corridor_y = 24.0 + 4.0 * draw();
  const double cx0 = 10.0, cx1 = 26.0, wall_thickness = 0.8;
  hall.solids.push_back({{cx0, corridor_y - corridor_width / 2 - wall_thickness, 0.0},
                         {cx1, corridor_y - corridor_width / 2, height}});
  hall.solids.push_back({{cx0, corridor_y + corridor_width / 2, 0.0},
                         {cx1, corridor_y + corridor_width / 2 + wall_thickness,
                          height}});
  hall.corridor = {{cx0, corridor_y - corridor_width / 2, 0.0},
                   {cx1, corridor_y + corridor_width / 2, height}};
  hall.corridor_width = corridor_width;

  // Open area kept free of structures (> 10 m across).
  hall.open_area = {{2.0, 2.0, 0.0}, {14.0, 14.0, height}};

  // Closed tour: across the open area, around the corridor's east end,
  // through the corridor westward, and back to the start.
  const double body_z = 0.5;
  hall.loop_route = {{5.0, 5.0, body_z},
                     {26.0, 5.0, body_z},
                     {28.0, corridor_y, body_z},
                     {8.0, corridor_y, body_z},
                     {5.0, 5.0, body_z}};

  // Interior structures beyond the corridor walls: pillars and
  // equipment boxes, placed by rejection sampling away from the route,
  // the open area, and each other.
  const int n_pillars = 3 + static_cast<int>(draw() * 4.0);
  const int n_equipment = 1 + static_cast<int>(draw() * 4.0);
  const std::size_t first_structure = hall.solids.size() - 2;  // corridor walls

  auto try_place = [&](double sx, double sy, double h) {
    const double half_diag = 0.5 * std::hypot(sx, sy);
    for (int attempt = 0; attempt < 2000; ++attempt) {
      const double px = 2.0 + 36.0 * draw();
      const double py = 2.0 + 36.0 * draw();
      Box candidate{{px - sx / 2, py - sy / 2, 0.0},
                    {px + sx / 2, py + sy / 2, h}};
      Box padded{candidate.min - Vec3::Constant(0.3),
                 candidate.max + Vec3::Constant(0.3)};
      if (padded.intersects(hall.open_area)) continue;
      Box corridor_padded{hall.corridor.min - Vec3::Constant(0.5),
                          hall.corridor.max + Vec3::Constant(0.5)};
      if (padded.intersects(corridor_padded)) continue;
      if (route_distance_2d(hall.loop_route, px, py) < 1.0 + half_diag) {
        continue;
      }
      bool collides = false;
      for (std::size_t s = first_structure; s < hall.solids.size(); ++s) {
        if (padded.intersects(hall.solids[s])) {
          collides = true;
          break;
        }
      }
      if (collides) continue;
      hall.solids.push_back(candidate);
      return;
    }
  };

  for (int i = 0; i < n_pillars; ++i) {
    const double sx = 0.4 + 0.8 * draw();
    const double sy = 0.4 + 0.8 * draw();
    const double h = draw() < 0.5 ? height : 2.0 + 2.0 * draw();
    try_place(sx, sy, h);
  }
  for (int i = 0; i < n_equipment; ++i) {
    const double sx = 1.0 + 2.0 * draw();
    const double sy = 1.0 + 2.0 * draw();
    const double h = 0.5 + 1.5 * draw();
    try_place(sx, sy, h);
  }
  return hall;
}

PointCloud sample_surface(const HallModel& hall, double spacing) {
  if (!(spacing > 0) || !std::isfinite(spacing)) {
    throw std::invalid_argument("sample_surface: spacing must be positive");
  }
  PointCloud cloud;
  for (std::size_t s = 0; s < hall.solids.size(); ++s) {
    const Box& box = hall.solids[s];
    for (int axis = 0; axis < 3; ++axis) {
      const int b1 = (axis + 1) % 3;
      const int b2 = (axis + 2) % 3;
      const int n1 =
          static_cast<int>(std::floor((box.max[b1] - box.min[b1]) / spacing));
      const int n2 =
          static_cast<int>(std::floor((box.max[b2] - box.min[b2]) / spacing));
      for (int side = 0; side < 2; ++side) {
        const double plane = side == 0 ? box.min[axis] : box.max[axis];
        for (int i = 0; i < n1; ++i) {
          for (int j = 0; j < n2; ++j) {
            Vec3 p;
            p[axis] = plane;
            p[b1] = box.min[b1] + (i + 0.5) * spacing;
            p[b2] = box.min[b2] + (j + 0.5) * spacing;
            if (!hall.interior.contains(p, 1e-9)) continue;
            bool buried = false;
            for (std::size_t o = 0; o < hall.solids.size(); ++o) {
              if (o != s && hall.solids[o].contains(p, -1e-6)) {
                buried = true;
                break;
              }
            }
            if (!buried) cloud.points.push_back(p);
          }
        }
      }
    }
  }
  return cloud;
}

RayHit Scene::raycast(const Vec3& origin, const Vec3& dir, double t,
                      double max_range) const {
  RayHit best = hall.raycast(origin, dir, max_range);
  double limit = best.hit ? best.range : max_range;
  for (const SemiStaticObject& object : objects) {
    if (!object.present_at(t)) continue;
    const RayHit hit = box_raycast(object.box, origin, dir, limit);
    if (hit.hit) {
      best = hit;
      limit = hit.range;
    }
  }
  return best;
}

std::vector<std::string> check_semistatic(
    const HallModel& hall, const std::vector<SemiStaticObject>& objects) {
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const Box& box = objects[i].box;
    if (!hall.interior.contains(box.min) || !hall.interior.contains(box.max)) {
      warnings.push_back("semi-static object " + std::to_string(i) +
                         " extends outside the hall interior");
      continue;
    }
    for (const Box& solid : hall.solids) {
      if (box.intersects(solid)) {
        warnings.push_back("semi-static object " + std::to_string(i) +
                           " overlaps static geometry");
        break;
      }
    }
  }
  return warnings;
}

// ---------------------------------------------------------------------------
// RouteTrajectory
// ---------------------------------------------------------------------------

namespace {

/// Trapezoidal 1D profile over length L with peak rate and ramp time.
struct Trapezoid {
  double peak = 0.0, ramp = 0.0, total = 0.0;
};

Trapezoid plan_trapezoid(double length, double max_rate, double accel) {
  Trapezoid t;
  t.peak = std::min(max_rate, std::sqrt(length * accel));
  if (t.peak <= 0.0) return t;
  t.ramp = t.peak / accel;
  const double cruise = std::max(0.0, (length - t.peak * t.ramp) / t.peak);
  t.total = 2.0 * t.ramp + cruise;
  return t;
}

}  // namespace

RouteTrajectory::RouteTrajectory(const HallModel& hall,
                                 std::vector<Vec3> waypoints,
                                 const TrajectoryLimits& limits) {
  if (waypoints.size() < 2) {
    throw std::invalid_argument("RouteTrajectory: need at least 2 waypoints");
  }
  if (!(limits.max_speed > 0) || !(limits.accel > 0) ||
      !(limits.yaw_rate > 0) || !(limits.yaw_accel > 0)) {
    throw std::invalid_argument("RouteTrajectory: limits must be positive");
  }
  // Clearance audit: every waypoint and a 0.1 m-stepped sampling of every
  // segment must keep kClearance from all surfaces.
  for (std::size_t k = 0; k + 1 < waypoints.size(); ++k) {
    const Vec3 a = waypoints[k];
    const Vec3 b = waypoints[k + 1];
    const double len = (b - a).norm();
    const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.1)));
    for (int i = 0; i <= steps; ++i) {
      const Vec3 p = a + (b - a) * (static_cast<double>(i) / steps);
      if (!hall.in_free_space(p, kClearance)) {
        char buf[96];
        std::snprintf(buf, sizeof(buf),
                      "route point (%.2f, %.2f, %.2f) violates %.1f m clearance",
                      p.x(), p.y(), p.z(), kClearance);
        throw DegenerateInputError(buf);
      }
    }
  }

  // Initial heading: the first segment with a horizontal component.
  double yaw = 0.0;
  for (std::size_t k = 0; k + 1 < waypoints.size(); ++k) {
    const Vec3 d = waypoints[k + 1] - waypoints[k];
    if (std::hypot(d.x(), d.y()) > 1e-12) {
      yaw = std::atan2(d.y(), d.x());
      break;
    }
  }
  const double initial_yaw = yaw;

  double t = 0.0;
  Phase dwell;
  dwell.kind = Phase::Kind::dwell;
  dwell.t0 = 0.0;
  dwell.t1 = limits.initial_dwell;
  dwell.start = waypoints.front();
  dwell.yaw0 = dwell.yaw1 = yaw;
  phases_.push_back(dwell);
  t = limits.initial_dwell;

  auto add_turn = [&](double target_yaw) {
    const double delta = wrap_pi(target_yaw - yaw);
    if (std::abs(delta) < 1e-12) return;
    const Trapezoid plan =
        plan_trapezoid(std::abs(delta), limits.yaw_rate, limits.yaw_accel);
    Phase turn;
    turn.kind = Phase::Kind::turn;
    turn.t0 = t;
    turn.t1 = t + plan.total;
    turn.start = phases_.back().kind == Phase::Kind::move
                     ? phases_.back().start +
                           phases_.back().dir * phases_.back().length
                     : phases_.back().start;
    turn.yaw0 = yaw;
    turn.yaw1 = yaw + delta;
    turn.length = std::abs(delta);
    turn.peak = plan.peak;
    turn.ramp = plan.ramp;
    phases_.push_back(turn);
    yaw += delta;
    t = turn.t1;
  };

  for (std::size_t k = 0; k + 1 < waypoints.size(); ++k) {
    const Vec3 a = waypoints[k];
    const Vec3 b = waypoints[k + 1];
    const double len = (b - a).norm();
    if (len < 1e-12) continue;
    const Vec3 dir = (b - a) / len;
    if (std::hypot(dir.x(), dir.y()) > 1e-12) {
      add_turn(std::atan2(dir.y(), dir.x()));
    }
    const Trapezoid plan = plan_trapezoid(len, limits.max_speed, limits.accel);
    Phase move;
    move.kind = Phase::Kind::move;
    move.t0 = t;
    move.t1 = t + plan.total;
    move.start = a;
    move.dir = dir;
    move.length = len;
    move.yaw0 = move.yaw1 = yaw;
    move.peak = plan.peak;
    move.ramp = plan.ramp;
    phases_.push_back(move);
    t = move.t1;
  }

  // A closed route turns back to its initial heading so the final pose
  // matches the starting pose exactly.
  if ((waypoints.front() - waypoints.back()).norm() < 1e-9) {
    add_turn(initial_yaw);
  }
}

double RouteTrajectory::duration() const { return phases_.back().t1; }

const RouteTrajectory::Phase& RouteTrajectory::phase_at(double t) const {
  if (t <= phases_.front().t0) return phases_.front();
  for (const Phase& p : phases_) {
    if (t <= p.t1) return p;
  }
  return phases_.back();
}

double RouteTrajectory::profile_pos(const Phase& p, double t) {
  const double total = p.t1 - p.t0;
  double tau = std::clamp(t - p.t0, 0.0, total);
  if (p.kind == Phase::Kind::dwell || p.ramp <= 0.0) return 0.0;
  const double accel = p.peak / p.ramp;
  if (tau < p.ramp) return 0.5 * accel * tau * tau;
  if (tau <= total - p.ramp) {
    return 0.5 * p.peak * p.ramp + p.peak * (tau - p.ramp);
  }
  const double remaining = total - tau;
  return p.length - 0.5 * accel * remaining * remaining;
}

double RouteTrajectory::profile_vel(const Phase& p, double t) {
  const double total = p.t1 - p.t0;
  const double tau = t - p.t0;
  if (p.kind == Phase::Kind::dwell || p.ramp <= 0.0 || tau < 0.0 ||
      tau > total) {
    return 0.0;
  }
  const double accel = p.peak / p.ramp;
  if (tau < p.ramp) return accel * tau;
  if (tau <= total - p.ramp) return p.peak;
  return accel * (total - tau);
}

double RouteTrajectory::profile_acc(const Phase& p, double t) {
  const double total = p.t1 - p.t0;
  const double tau = t - p.t0;
  if (p.kind == Phase::Kind::dwell || p.ramp <= 0.0 || tau < 0.0 ||
      tau > total) {
    return 0.0;
  }
  const double accel = p.peak / p.ramp;
  if (tau < p.ramp) return accel;
  if (tau <= total - p.ramp) return 0.0;
  return -accel;
}

PoseSE3 RouteTrajectory::pose(double t) const {
  const Phase& p = phase_at(t);
  Vec3 position = p.start;
  double yaw = p.yaw0;
  if (p.kind == Phase::Kind::move) {
    position += p.dir * profile_pos(p, t);
  } else if (p.kind == Phase::Kind::turn) {
    const double sign = p.yaw1 >= p.yaw0 ? 1.0 : -1.0;
    yaw = p.yaw0 + sign * profile_pos(p, t);
  }
  if (t >= phases_.back().t1) {
    // Hold the final state.
    const Phase& last = phases_.back();
    if (last.kind == Phase::Kind::move) {
      position = last.start + last.dir * last.length;
    }
    yaw = last.yaw1;
  }
  return PoseSE3(rot_z(yaw), position);
}

Vec3 RouteTrajectory::velocity(double t) const {
  const Phase& p = phase_at(t);
  if (p.kind != Phase::Kind::move) return Vec3::Zero();
  return p.dir * profile_vel(p, t);
}

Vec3 RouteTrajectory::acceleration(double t) const {
  const Phase& p = phase_at(t);
  if (p.kind != Phase::Kind::move) return Vec3::Zero();
  return p.dir * profile_acc(p, t);
}

Vec3 RouteTrajectory::angular_velocity(double t) const {
  const Phase& p = phase_at(t);
  if (p.kind != Phase::Kind::turn) return Vec3::Zero();
  const double sign = p.yaw1 >= p.yaw0 ? 1.0 : -1.0;
  return Vec3(0.0, 0.0, sign * profile_vel(p, t));
}

Trajectory RouteTrajectory::sample(double rate, double t_end) const {
  if (!(rate > 0)) {
    throw std::invalid_argument("RouteTrajectory::sample: rate must be > 0");
  }
  Trajectory out;
  const std::size_t n =
      static_cast<std::size_t>(std::floor(t_end * rate + 1e-9)) + 1;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / rate;
    out.push_back({t, pose(t)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sensors
// ---------------------------------------------------------------------------

ScanFrame simulate_lidar(const Scene& scene, const MotionModel& motion,
                         const LidarSpec& spec, double sweep_start,
                         const CounterRng& rng, std::uint64_t sweep_index) {
  if (spec.rings < 1 || spec.columns < 1) {
    throw std::invalid_argument("simulate_lidar: rings/columns must be >= 1");
  }
  const std::size_t rays =
      static_cast<std::size_t>(spec.rings) * static_cast<std::size_t>(spec.columns);
  std::vector<Vec3> points(rays);
  std::vector<double> times(rays);
  std::vector<char> valid(rays, 0);

  // Ring elevations span [0, vertical_fov] from the horizon upward.
  std::vector<double> sin_elev(spec.rings), cos_elev(spec.rings);
  for (int i = 0; i < spec.rings; ++i) {
    const double elev = spec.rings > 1 ? (spec.vertical_fov * i /
                                          (spec.rings - 1)) * pi / 180.0
                                       : 0.0;
    sin_elev[i] = std::sin(elev);
    cos_elev[i] = std::cos(elev);
  }

  const std::uint64_t sweep_base = sweep_index * rays;
  parallel_for(0, static_cast<std::size_t>(spec.columns), [&](std::size_t j) {
    const double t =
        sweep_start + spec.sweep_duration * static_cast<double>(j) / spec.columns;
    const PoseSE3 pose = motion.pose(t);
    const Mat3 rot = pose.rotation_matrix();
    const double azimuth = 2.0 * pi * static_cast<double>(j) / spec.columns;
    const double ca = std::cos(azimuth), sa = std::sin(azimuth);
    for (int i = 0; i < spec.rings; ++i) {
      const Vec3 dir_body(cos_elev[i] * ca, cos_elev[i] * sa, sin_elev[i]);
      const Vec3 dir_world = rot * dir_body;
      const RayHit hit =
          scene.raycast(pose.translation, dir_world, t, spec.max_range);
      if (!hit.hit) continue;
      double range = hit.range;
      if (spec.range_sigma > 0) {
        range += spec.range_sigma *
                 rng.normal(sweep_base + j * static_cast<std::uint64_t>(spec.rings) + i);
      }
      if (!(range > 1e-6) || range > spec.max_range) continue;
      const std::size_t slot = j * static_cast<std::size_t>(spec.rings) + i;
      points[slot] = range * dir_body;
      times[slot] = t;
      valid[slot] = 1;
    }
  });

  ScanFrame frame;
  frame.sweep_start = sweep_start;
  frame.sweep_end = sweep_start + spec.sweep_duration;
  for (std::size_t s = 0; s < rays; ++s) {
    if (!valid[s]) continue;
    frame.points.points.push_back(points[s]);
    frame.points.times.push_back(times[s]);
  }
  frame.validate();
  return frame;
}

CameraIntrinsics DepthCameraSpec::intrinsics() const {
  CameraIntrinsics intr;
  intr.width = width;
  intr.height = height;
  intr.fx = intr.fy =
      (0.5 * width) / std::tan(0.5 * hfov_deg * pi / 180.0);
  intr.cx = 0.5 * (width - 1);
  intr.cy = 0.5 * (height - 1);
  return intr;
}

DepthMap simulate_depth_camera(const Scene& scene, const PoseSE3& cam_in_world,
                               const DepthCameraSpec& spec, double t,
                               const CounterRng& rng,
                               std::uint64_t frame_index) {
  const CameraIntrinsics intr = spec.intrinsics();
  DepthMap out;
  out.resize(intr.width, intr.height);
  const Mat3 rot = cam_in_world.rotation_matrix();
  const Vec3 origin = cam_in_world.translation;
  const double grazing_cos = std::cos(spec.grazing_deg * pi / 180.0);
  const std::uint64_t frame_base =
      frame_index * static_cast<std::uint64_t>(intr.width) * intr.height;

  parallel_for(0, static_cast<std::size_t>(intr.height), [&](std::size_t v) {
    for (int u = 0; u < intr.width; ++u) {
      const Vec3 ray((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      const double norm = ray.norm();
      const Vec3 unit = ray / norm;
      const Vec3 dir_world = rot * unit;
      const RayHit hit = scene.raycast(origin, dir_world, t, 1e9);
      if (!hit.hit) continue;
      // Depth along the optical axis, not the ray.
      double z = hit.range * unit.z();
      const std::uint64_t pixel =
          frame_base + static_cast<std::uint64_t>(v) * intr.width + u;
      // Stereo matching degrades at grazing incidence; mimic the resulting
      // holes with a random dropout.
      const double incidence_cos = std::abs(dir_world.dot(hit.normal));
      if (incidence_cos < grazing_cos &&
          rng.uniform(4 * pixel) < spec.dropout_prob) {
        continue;
      }
      if (spec.disparity_sigma > 0) {
        const double sigma_z =
            z * z * spec.disparity_sigma / (intr.fx * spec.baseline);
        z += sigma_z * rng.normal(2 * pixel + 1);
      }
      if (z > spec.max_depth || z < 0.05) continue;
      out.at(u, static_cast<int>(v)) = static_cast<float>(z);
    }
  });
  return out;
}

std::vector<ImuSample> simulate_imu(const MotionModel& motion, double t0,
                                    double t1, double rate,
                                    double accel_sigma, double gyro_sigma,
                                    const CounterRng& rng) {
  if (!(rate > 0)) {
    throw std::invalid_argument("simulate_imu: rate must be positive");
  }
  const Vec3 gravity(0.0, 0.0, 9.81);
  const std::size_t n =
      static_cast<std::size_t>(std::floor((t1 - t0) * rate + 1e-9));
  std::vector<ImuSample> samples(n);
  parallel_for(0, n, [&](std::size_t k) {
    const double t = t0 + static_cast<double>(k) / rate;
    const PoseSE3 pose = motion.pose(t);
    const Mat3 rot = pose.rotation_matrix();
    ImuSample s;
    s.t = t;
    s.accel = rot.transpose() * (motion.acceleration(t) + gravity);
    s.gyro = motion.angular_velocity(t);
    const std::uint64_t base = static_cast<std::uint64_t>(k) * 6;
    if (accel_sigma > 0) {
      s.accel += accel_sigma * Vec3(rng.normal(base), rng.normal(base + 1),
                                    rng.normal(base + 2));
    }
    if (gyro_sigma > 0) {
      s.gyro += gyro_sigma * Vec3(rng.normal(base + 3), rng.normal(base + 4),
                                  rng.normal(base + 5));
    }
    samples[k] = s;
  });
  return samples;
}

// ---------------------------------------------------------------------------
// Rig
// ---------------------------------------------------------------------------

RigGeometry make_rig() {
  RigGeometry rig;
  // Optical frame (z forward, x right, y down) of the front camera,
  // expressed in the robot body frame (x forward, y left, z up).
  Mat3 optical;
  optical.col(0) = Vec3(0.0, -1.0, 0.0);   // optical x (right)
  optical.col(1) = Vec3(0.0, 0.0, -1.0);   // optical y (down)
  optical.col(2) = Vec3(1.0, 0.0, 0.0);    // optical z (forward)

  const Vec3 tower(0.05, 0.0, 0.4);
  const double radius = 0.05;
  rig.camera_order = {"front", "left", "rear", "right"};
  std::vector<PoseSE3> cam_in_robot;
  for (std::size_t k = 0; k < rig.camera_order.size(); ++k) {
    const double yaw = 0.5 * pi * static_cast<double>(k);
    const Mat3 rot = rot_z(yaw).toRotationMatrix() * optical;
    const Vec3 pos = tower + radius * Vec3(std::cos(yaw), std::sin(yaw), 0.0);
    cam_in_robot.emplace_back(Quat(rot), pos);
  }
  rig.front_in_robot = cam_in_robot[0];
  rig.calibration.camera_to_body["front"] = PoseSE3::identity();
  for (std::size_t k = 1; k < rig.camera_order.size(); ++k) {
    rig.calibration.camera_to_body[rig.camera_order[k]] =
        rig.front_in_robot.inverse() * cam_in_robot[k];
  }
  rig.calibration.validate();
  return rig;
}

PoseSE3 RigGeometry::camera_in_robot(const std::string& id) const {
  return front_in_robot * calibration.extrinsic(id);
}

// ---------------------------------------------------------------------------
// Dataset emission
// ---------------------------------------------------------------------------

namespace {

/// Mean pixel displacement of a sparse grid of scene points between two
/// camera poses (the optical-flow proxy driving keyframe selection).
double mean_grid_flow(const Scene& scene, const PoseSE3& prev_cam,
                      const PoseSE3& cur_cam, const CameraIntrinsics& intr,
                      double t_prev) {
  constexpr int kGridX = 8, kGridY = 6;
  const Mat3 rot = prev_cam.rotation_matrix();
  const PoseSE3 cur_inv = cur_cam.inverse();
  double sum = 0.0;
  int count = 0;
  for (int gy = 0; gy < kGridY; ++gy) {
    for (int gx = 0; gx < kGridX; ++gx) {
      const double u = (gx + 0.5) * intr.width / kGridX;
      const double v = (gy + 0.5) * intr.height / kGridY;
      const Vec3 ray((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      const Vec3 unit = ray.normalized();
      const Vec3 dir_world = rot * unit;
      const RayHit hit =
          scene.raycast(prev_cam.translation, dir_world, t_prev, 1e9);
      if (!hit.hit) continue;
      const Vec3 world = prev_cam.translation + hit.range * dir_world;
      const Vec3 in_cur = cur_inv.apply(world);
      if (in_cur.z() < 0.05) continue;
      const double u2 = in_cur.x() / in_cur.z() * intr.fx + intr.cx;
      const double v2 = in_cur.y() / in_cur.z() * intr.fy + intr.cy;
      sum += std::hypot(u2 - u, v2 - v);
      ++count;
    }
  }
  return count > 0 ? sum / count : 0.0;
}

Quat small_rotation(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle < 1e-15) return Quat::Identity();
  return Quat(Eigen::AngleAxisd(angle, axis_angle / angle));
}

}  // namespace

DatasetSummary emit_dataset(const SynthConfig& cfg, const fs::path& out_dir) {
  if (!(cfg.duration > 0)) {
    throw std::invalid_argument("emit_dataset: duration must be positive");
  }
  DatasetSummary summary;
  const HallModel hall = build_hall(cfg.seed);
  summary.warnings = check_semistatic(hall, cfg.semi_static);
  const Scene scene{hall, cfg.semi_static};
  const std::vector<Vec3>& waypoints =
      cfg.waypoints.empty() ? hall.loop_route : cfg.waypoints;
  const RouteTrajectory trajectory(hall, waypoints, cfg.limits);
  const RigGeometry rig = make_rig();

  fs::create_directories(out_dir / "scans");
  fs::create_directories(out_dir / "depth");
  fs::create_directories(out_dir / "streams");
  fs::create_directories(out_dir / "groundtruth");

  // --- LiDAR sweeps ---------------------------------------------------
  const CounterRng lidar_rng(cfg.seed, kLidarStream);
  ScanIndex scan_index;
  scan_index.sweep_duration = cfg.lidar.sweep_duration;
  const std::size_t n_sweeps = static_cast<std::size_t>(
      std::floor(cfg.duration / cfg.lidar.sweep_duration + 1e-9));
  for (std::size_t s = 0; s < n_sweeps; ++s) {
    const double t0 = static_cast<double>(s) * cfg.lidar.sweep_duration;
    const ScanFrame frame =
        simulate_lidar(scene, trajectory, cfg.lidar, t0, lidar_rng, s);
    char name[32];
    std::snprintf(name, sizeof(name), "scan_%06zu.ply", s);
    save_point_cloud(out_dir / "scans" / name, frame.points);
    scan_index.scans.push_back({name, t0, t0 + cfg.lidar.sweep_duration});
  }
  save_scan_index(scan_index, out_dir / "scans" / "index.json");
  summary.n_scans = n_sweeps;

  // --- IMU --------------------------------------------------------------
  const std::vector<ImuSample> imu =
      simulate_imu(trajectory, 0.0, cfg.duration, cfg.imu_rate,
                   cfg.imu_accel_sigma, cfg.imu_gyro_sigma,
                   CounterRng(cfg.seed, kImuStream));
  save_imu(out_dir / "imu.csv", imu);
  summary.n_imu = imu.size();

  // --- Rig + mount -------------------------------------------------------
  save_rig_calibration(out_dir / "rig.json", rig.calibration);
  save_mount(rig.front_in_robot, out_dir / "groundtruth" / "mount.json");

  // --- Camera streams ----------------------------------------------------
  const CameraIntrinsics intr = cfg.camera.intrinsics();
  const std::size_t n_frames = static_cast<std::size_t>(
      std::floor(cfg.duration * cfg.camera_rate + 1e-9));
  FrameIndex frame_index;
  for (const std::string& id : rig.camera_order) {
    frame_index.cameras[id] = {intr, cfg.camera.max_depth};
  }
  const CounterRng param_rng(cfg.seed, kParamStream);

  for (std::size_t k = 0; k < rig.camera_order.size(); ++k) {
    const std::string& id = rig.camera_order[k];
    const PoseSE3 mount = rig.camera_in_robot(id);

    // Per-stream drift character: rate scaling, sign, and direction vary
    // between cameras so the four streams disagree the way independent
    // visual-odometry runs would.
    const std::uint64_t pc = 16 * k;
    const double yaw_factor = (0.6 + 0.8 * param_rng.uniform(pc)) *
                              (param_rng.uniform(pc + 1) < 0.5 ? -1.0 : 1.0);
    const double drift_azimuth = 2.0 * pi * param_rng.uniform(pc + 2);
    const Vec3 drift_dir(std::cos(drift_azimuth), std::sin(drift_azimuth),
                         0.4 * (param_rng.uniform(pc + 3) - 0.5));
    const double pos_factor = 0.6 + 0.8 * param_rng.uniform(pc + 4);
    const double yaw_rate = cfg.stream_yaw_drift * yaw_factor;
    const double pos_rate = cfg.stream_pos_drift * pos_factor;

    std::vector<PoseSE3> true_cam(n_frames);
    std::vector<double> frame_time(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) {
      frame_time[f] = static_cast<double>(f) / cfg.camera_rate;
      true_cam[f] = trajectory.pose(frame_time[f]) * mount;
    }

    std::vector<double> flows(n_frames, 0.0);
    parallel_for(1, n_frames, [&](std::size_t f) {
      flows[f] = mean_grid_flow(scene, true_cam[f - 1], true_cam[f], intr,
                                frame_time[f - 1]);
    });

    // Corrupted stream poses: drift rotation about the stream origin,
    // position drift, per-frame jitter, then the global scale bias.
    const CounterRng vo_rng(cfg.seed, kVoStream + k);
    const Vec3 origin = n_frames > 0 ? true_cam[0].translation : Vec3::Zero();
    Trajectory stream;
    stream.reserve(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) {
      const double t = frame_time[f];
      const Quat drift_rot = rot_z(yaw_rate * t);
      Vec3 p = drift_rot * (true_cam[f].translation - origin) + origin +
               drift_dir.normalized() * (pos_rate * t);
      Quat q = drift_rot * true_cam[f].rotation;
      const std::uint64_t base = 8 * static_cast<std::uint64_t>(f);
      if (cfg.stream_jitter_pos > 0) {
        p += cfg.stream_jitter_pos * Vec3(vo_rng.normal(base),
                                          vo_rng.normal(base + 1),
                                          vo_rng.normal(base + 2));
      }
      if (cfg.stream_jitter_yaw > 0) {
        q = small_rotation(cfg.stream_jitter_yaw *
                           Vec3(vo_rng.normal(base + 3),
                                vo_rng.normal(base + 4),
                                vo_rng.normal(base + 5))) *
            q;
        q.normalize();
      }
      p = cfg.visual_scale * (p - origin) + origin;
      stream.push_back({t, PoseSE3(q, p)});
    }
    save_trajectory(out_dir / "streams" / (id + ".txt"), stream);

    // Depth images only for frames the flow rule would select.
    const std::vector<std::size_t> selected =
        keyframe_select(flows, cfg.flow_keyframe_px);
    const std::set<std::size_t> selected_set(selected.begin(), selected.end());
    const CounterRng depth_rng(cfg.seed, kDepthStream + k);
    for (std::size_t f = 0; f < n_frames; ++f) {
      FrameRecord record;
      record.camera = id;
      record.index = f;
      record.t = frame_time[f];
      record.flow_px = flows[f];
      if (cfg.emit_depth && selected_set.count(f) > 0) {
        const DepthMap depth = simulate_depth_camera(
            scene, true_cam[f], cfg.camera, frame_time[f], depth_rng, f);
        char name[48];
        std::snprintf(name, sizeof(name), "%s_%06zu.png", id.c_str(), f);
        save_depth_png(out_dir / "depth" / name, depth);
        record.depth_file = name;
        ++summary.n_depth_images;
      }
      frame_index.frames.push_back(std::move(record));
    }
    summary.n_frames += n_frames;
  }
  save_frame_index(frame_index, out_dir / "depth" / "index.json");

  // --- Ground truth ------------------------------------------------------
  const Trajectory gt = trajectory.sample(cfg.gt_trajectory_rate, cfg.duration);
  save_trajectory(out_dir / "groundtruth" / "trajectory.txt", gt);
  Trajectory gt_rig;
  gt_rig.reserve(gt.size());
  for (const TrajectoryEntry& e : gt) {
    gt_rig.push_back({e.t, e.pose * rig.front_in_robot});
  }
  save_trajectory(out_dir / "groundtruth" / "rig_trajectory.txt", gt_rig);
  if (cfg.emit_gt_surface) {
    const PointCloud surface = sample_surface(hall, cfg.gt_surface_spacing);
    save_point_cloud(out_dir / "groundtruth" / "surface.ply", surface);
    summary.n_gt_surface_points = surface.size();
  }

  // --- Dataset summary ----------------------------------------------------
  nlohmann::ordered_json info;
  info["seed"] = cfg.seed;
  info["duration"] = cfg.duration;
  info["camera_rate"] = cfg.camera_rate;
  info["imu_rate"] = cfg.imu_rate;
  info["lidar"] = {{"rings", cfg.lidar.rings},
                   {"columns", cfg.lidar.columns},
                   {"sweep_duration", cfg.lidar.sweep_duration},
                   {"range_sigma", cfg.lidar.range_sigma}};
  info["counts"] = {{"scans", summary.n_scans},
                    {"imu_samples", summary.n_imu},
                    {"camera_frames", summary.n_frames},
                    {"depth_images", summary.n_depth_images},
                    {"gt_surface_points", summary.n_gt_surface_points}};
  info["cameras"] = rig.camera_order;
  write_file(out_dir / "dataset.json", info.dump(2) + "\n");
  return summary;
}

}  // namespace hallmap
