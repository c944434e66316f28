// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>

#include <doctest.h>

#include "hallmap/errors.hpp"
#include "hallmap/geometry.hpp"
#include "test_util.hpp"

using namespace hallmap;
namespace tu = hallmap::testutil;

namespace {
constexpr double kPi = std::numbers::pi;

PoseSE3 translate(double x, double y, double z) {
  return PoseSE3(Quat::Identity(), Vec3(x, y, z));
}
}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("compose: identity with identity is identity") {
  const PoseSE3 r = se3_compose(PoseSE3::identity(), PoseSE3::identity());
  CHECK(r.rotation_angle_to(PoseSE3::identity()) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.translation.norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("compose: translate(1,0,0) after rot_z(90deg) maps (1,0,0) to (1,1,0)") {
  // Hand-multiplied 4x4 check: rot_z(90deg) sends (1,0,0) to (0,1,0),
  // then the translation adds (1,0,0).
  const PoseSE3 a = translate(1.0, 0.0, 0.0);
  const PoseSE3 b(rot_z(kPi / 2.0), Vec3::Zero());
  const Vec3 image = se3_compose(a, b).apply(Vec3(1.0, 0.0, 0.0));
  CHECK((image - Vec3(1.0, 1.0, 0.0)).norm() < 1e-12);
}

TEST_CASE("compose: a * inverse(a) is identity within 1e-9") {
  const CounterRng rng(11, 0);
  for (std::uint64_t i = 0; i < 100; ++i) {
    const PoseSE3 a = tu::random_pose(rng, i);
    const PoseSE3 r = a * a.inverse();
    CHECK(r.is_approx(PoseSE3::identity(), 1e-9));
    // Pose invariant: apply(inverse(P), apply(P, x)) == x.
    const Vec3 x = tu::random_vec(rng, 500000 + i, -10.0, 10.0);
    CHECK((a.inverse().apply(a.apply(x)) - x).norm() < 1e-9);
  }
}

TEST_CASE("compose: identity is a two-sided unit") {
  const CounterRng rng(12, 0);
  const PoseSE3 a = tu::random_pose(rng, 0);
  const PoseSE3 left = PoseSE3::identity() * a;
  const PoseSE3 right = a * PoseSE3::identity();
  CHECK(left.is_approx(a, 1e-12));
  CHECK(right.is_approx(a, 1e-12));
}

TEST_CASE("exp: zero twist gives the identity") {
  const PoseSE3 p = se3_exp(Vec6::Zero());
  CHECK(p.is_approx(PoseSE3::identity(), 1e-15));
}

TEST_CASE("exp: pure yaw twist (0,0,pi/2,0,0,0) is rot_z(90deg)") {
  // Rodrigues by hand: cos(90) I + sin(90) K + (1-cos90) kk^T, k = e_z.
  Vec6 twist = Vec6::Zero();
  twist(2) = kPi / 2.0;
  const PoseSE3 p = se3_exp(twist);
  CHECK((p.apply(Vec3(1, 0, 0)) - Vec3(0, 1, 0)).norm() < 1e-12);
  CHECK(p.translation.norm() < 1e-15);
  CHECK(p.rotation_angle_to(PoseSE3(rot_z(kPi / 2.0), Vec3::Zero())) < 1e-12);
}

TEST_CASE("exp/log: round-trip of 1000 random poses within 1e-9") {
  const CounterRng rng(13, 0);
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const PoseSE3 p = tu::random_pose(rng, i, 5.0, kPi - 0.01);
    const PoseSE3 q = se3_exp(se3_log(p));
    worst = std::max(worst, q.rotation_angle_to(p));
    worst = std::max(worst, q.translation_distance_to(p));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("exp/log: small-angle branch round-trips") {
  Vec6 twist;
  twist << 3e-9, -2e-9, 1e-9, 0.5, -0.25, 2.0;
  const Vec6 back = se3_log(se3_exp(twist));
  CHECK((back - twist).norm() < 1e-15);
}

TEST_CASE("log: rotation at pi raises a degenerate-rotation error") {
  const PoseSE3 half_turn(rot_z(kPi), Vec3(1, 2, 3));
  CHECK_THROWS_AS((void)se3_log(half_turn), DegenerateInputError);
  const PoseSE3 near_half_turn(rot_z(kPi - 1e-9), Vec3::Zero());
  CHECK_THROWS_AS((void)se3_log(near_half_turn), DegenerateInputError);
  const PoseSE3 fine(rot_z(kPi - 1e-3), Vec3::Zero());
  CHECK_NOTHROW((void)se3_log(fine));
}

TEST_CASE("interpolate: endpoints are exact") {
  const CounterRng rng(14, 0);
  const PoseSE3 p0 = tu::random_pose(rng, 0);
  const PoseSE3 p1 = tu::random_pose(rng, 1);
  CHECK(interpolate_pose(p0, p1, 0.0).is_approx(p0, 1e-12));
  CHECK(interpolate_pose(p0, p1, 1.0).is_approx(p1, 1e-12));
}

TEST_CASE("interpolate: halfway to translate(2,0,0) is translate(1,0,0)") {
  const PoseSE3 mid =
      interpolate_pose(PoseSE3::identity(), translate(2, 0, 0), 0.5);
  CHECK(mid.is_approx(translate(1, 0, 0), 1e-12));
}

TEST_CASE("interpolate: halfway to rot_z(90deg) is rot_z(45deg)") {
  const PoseSE3 p1(rot_z(kPi / 2.0), Vec3::Zero());
  const PoseSE3 mid = interpolate_pose(PoseSE3::identity(), p1, 0.5);
  CHECK(mid.rotation_angle_to(PoseSE3(rot_z(kPi / 4.0), Vec3::Zero())) < 1e-12);
}

TEST_CASE("interpolate: t outside [0,1] is an argument error") {
  CHECK_THROWS_AS(
      (void)interpolate_pose(PoseSE3::identity(), PoseSE3::identity(), -0.1),
      std::invalid_argument);
  CHECK_THROWS_AS(
      (void)interpolate_pose(PoseSE3::identity(), PoseSE3::identity(), 1.1),
      std::invalid_argument);
}

TEST_CASE("sim3: apply scales pairwise distances by s") {
  const CounterRng rng(15, 0);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const double s = rng.uniform(900000 + i, 0.2, 5.0);
    const Sim3Transform t(s, tu::random_rotation(rng, i),
                          tu::random_vec(rng, 300000 + i, -3.0, 3.0));
    const Vec3 x = tu::random_vec(rng, 400000 + i, -10.0, 10.0);
    const Vec3 y = tu::random_vec(rng, 600000 + i, -10.0, 10.0);
    const double expected = s * (x - y).norm();
    CHECK(std::abs((t.apply(x) - t.apply(y)).norm() - expected) <
          1e-9 * std::max(1.0, expected));
  }
}

TEST_CASE("sim3: inverse has scale 1/s and cancels") {
  const Sim3Transform t(0.95, rot_z(0.3), Vec3(1, -2, 0.5));
  CHECK(t.inverse().scale == doctest::Approx(1.0 / 0.95).epsilon(1e-12));
  const Sim3Transform id = t * t.inverse();
  CHECK(id.scale == doctest::Approx(1.0).epsilon(1e-12));
  const Vec3 x(0.3, 0.7, -1.1);
  CHECK((id.apply(x) - x).norm() < 1e-12);
  CHECK((t.inverse().apply(t.apply(x)) - x).norm() < 1e-12);
}

TEST_CASE("sim3: rejects non-positive scale") {
  CHECK_THROWS_AS(Sim3Transform(0.0, Quat::Identity(), Vec3::Zero()),
                  DegenerateInputError);
  CHECK_THROWS_AS(Sim3Transform(-1.0, Quat::Identity(), Vec3::Zero()),
                  DegenerateInputError);
}

TEST_CASE("sim3: pose action matches similarity composition") {
  const CounterRng rng(16, 0);
  const Sim3Transform s(1.4, tu::random_rotation(rng, 0), Vec3(0.5, 0, -2));
  const PoseSE3 p = tu::random_pose(rng, 1);
  const PoseSE3 acted = s.apply_to_pose(p);
  const Sim3Transform composed = s * Sim3Transform::from_se3(p);
  CHECK(composed.scale == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(acted.rotation_angle_to(composed.se3()) < 1e-12);
  CHECK(acted.translation_distance_to(composed.se3()) < 1e-12);
  // Points mapped through the acted pose agree with mapping through s
  // after p (for the rotation/translation part of the group product).
  const Vec3 x(1.0, 2.0, 3.0);
  CHECK((composed.apply(x) - (s.apply(p.apply(x)))).norm() < 1e-12);
}

TEST_CASE("rotation_between maps the source onto the target direction") {
  const CounterRng rng(17, 0);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const Vec3 a = tu::random_unit(rng, 2 * i);
    const Vec3 b = tu::random_unit(rng, 2 * i + 1);
    CHECK((rotation_between(a, b) * a - b).norm() < 1e-12);
  }
  // Antipodal pair still works (axis choice is free).
  const Vec3 up = Vec3::UnitZ();
  CHECK((rotation_between(up, Vec3(-up)) * up + up).norm() < 1e-9);
}

}  // TEST_SUITE
