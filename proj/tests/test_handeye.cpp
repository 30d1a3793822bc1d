#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracle.hpp"
#include "snav/error.hpp"
#include "snav/handeye.hpp"

using namespace snav;

namespace {

RigidTransform true_x() {
  return RigidTransform::translation(42, -18, 96) * RigidTransform::rot_z_deg(8) * RigidTransform::rot_x_deg(2.5);
}

RigidTransform small_perturbation(std::mt19937_64& gen, double rot_deg, double trans_mm) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec3 w = Vec3(n(gen), n(gen), n(gen)) * deg2rad(rot_deg);
  const Vec3 t = Vec3(n(gen), n(gen), n(gen)) * trans_mm;
  const double angle = w.norm();
  const RigidTransform r = angle > 0 ? RigidTransform::rotation(w / angle, angle) : RigidTransform::identity();
  return RigidTransform::translation(t) * r;
}

/// Eye-in-hand construction: the target sits fixed in the base frame, so
/// target_in_camera = X^-1 * flange^-1 * target_in_base.
std::vector<CalibrationSample> construct(const RigidTransform& x, int n, std::uint64_t seed, double rot_noise = 0.0,
                                         double trans_noise = 0.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ang(-180.0, 180.0);  // unrestricted orientations
  std::uniform_real_distribution<double> pos(-150.0, 150.0);
  const RigidTransform target_in_base = RigidTransform::translation(460, 0, -120) * RigidTransform::rot_z_deg(12);
  std::vector<CalibrationSample> out;
  for (int i = 0; i < n; ++i) {
    const Vec3 axis(nd(gen), nd(gen), nd(gen));
    const RigidTransform flange = RigidTransform::translation(460 + pos(gen), pos(gen), 300 + 0.5 * pos(gen)) *
                                  RigidTransform::rot_x_deg(180) * RigidTransform::rotation(axis, deg2rad(ang(gen)));
    RigidTransform target = x.inverse() * flange.inverse() * target_in_base;
    RigidTransform observed_flange = flange;
    if (rot_noise > 0 || trans_noise > 0) {
      target = small_perturbation(gen, rot_noise, trans_noise) * target;
      observed_flange = observed_flange * small_perturbation(gen, rot_noise, trans_noise);
    }
    out.push_back({observed_flange, target});
  }
  return out;
}

}  // namespace

TEST(SolveAxXb, IdentityWhenCameraCoincidesWithFlange) {
  // With X = I and the target at the base origin the camera sees the
  // inverse of each flange pose.
  std::mt19937_64 gen(4);
  std::vector<CalibrationSample> samples;
  for (int i = 0; i < 3; ++i) {
    const RigidTransform f = oracle::random_pose(gen, 200.0).transform;
    samples.push_back({f, f.inverse()});
  }
  const HandEyeResult r = solve_ax_xb(samples);
  EXPECT_LE((r.camera_in_flange.matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SolveAxXb, NoiselessRecovery) {
  const RigidTransform x = true_x();
  const HandEyeResult r = solve_ax_xb(construct(x, 10, 1));
  const PoseError e = pose_error(r.camera_in_flange, x);
  EXPECT_LT(e.translation_mm, 1e-6);
  EXPECT_LT(e.rotation_deg, 1e-6);
  EXPECT_EQ(r.sample_count, 10);
  EXPECT_EQ(r.pair_count, 45);
  EXPECT_EQ(r.solver, "park-martin");
  EXPECT_LT(r.rotation_residual, 1e-6);
  EXPECT_LT(r.translation_residual, 1e-6);
}

TEST(SolveAxXb, NoisyMonteCarlo) {
  const RigidTransform x = true_x();
  std::vector<double> err, resid;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const HandEyeResult r = solve_ax_xb(construct(x, 10, 100 + seed, 0.05, 0.1));
    err.push_back(pose_error(r.camera_in_flange, x).translation_mm);
    resid.push_back(r.translation_residual);
  }
  EXPECT_LT(oracle::median(err), 0.3);
  EXPECT_LT(oracle::median(resid), 0.5);
}

TEST(SolveAxXb, ParallelAxesAreInsufficient) {
  // Every flange rotation shares the z axis.
  const RigidTransform x = true_x();
  const RigidTransform target_in_base = RigidTransform::translation(400, 0, 0);
  std::vector<CalibrationSample> samples;
  for (int i = 0; i < 5; ++i) {
    const RigidTransform f = RigidTransform::translation(10.0 * i, 5.0 * i, 300) * RigidTransform::rot_z_deg(20.0 * i);
    samples.push_back({f, x.inverse() * f.inverse() * target_in_base});
  }
  try {
    solve_ax_xb(samples);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientMotion);
  }
}

TEST(SolveAxXb, TooFewSamples) {
  const auto s = construct(true_x(), 2, 3);
  try {
    solve_ax_xb(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewSamples);
  }
}

TEST(PlanPoses, ThreePosesLookAtCenter) {
  const Box3 box{Point3(380, -80, -10), Point3(540, 80, 10)};
  const auto poses = plan_poses(box, 3, 20.0);
  ASSERT_EQ(poses.size(), 3u);
  for (const RigidTransform& p : poses) {
    const Vec3 axis = p.rotate(Vec3::UnitZ());
    const Vec3 to_center = (box.center() - p.translation()).normalized();
    EXPECT_NEAR(axis.dot(to_center), 1.0, 1e-9);
  }
  std::vector<Eigen::AngleAxisd> rel;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    rel.emplace_back(poses[i - 1].quaternion().conjugate() * poses[i].quaternion());
  }
  for (std::size_t i = 0; i < rel.size(); ++i) {
    for (std::size_t j = i + 1; j < rel.size(); ++j) {
      const double c = std::abs(rel[i].axis().dot(rel[j].axis()));
      EXPECT_GE(std::acos(std::min(1.0, c)) * 180.0 / std::numbers::pi, 10.0 - 1e-9);
    }
  }
}

TEST(PlanPoses, ZeroSizeBox) {
  const Box3 box{Point3(450, 0, 0), Point3(450, 0, 0)};
  const auto poses = plan_poses(box, 5, 25.0);
  ASSERT_EQ(poses.size(), 5u);
  for (const RigidTransform& p : poses) {
    const Point3 c = p.inverse().apply(box.center());
    EXPECT_NEAR(c.x(), 0.0, 1e-9);
    EXPECT_NEAR(c.y(), 0.0, 1e-9);
    EXPECT_GT(c.z(), 0.0);
  }
}

TEST(PlanPoses, Preconditions) {
  const Box3 box{Point3(0, 0, 0), Point3(10, 10, 10)};
  try {
    plan_poses(box, 1, 20.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewSamples);
  }
  EXPECT_THROW(plan_poses(box, 3, 0.0), Error);
  EXPECT_THROW(plan_poses(box, 3, 61.0), Error);
  const Box3 huge{Point3(-2000, -2000, 0), Point3(2000, 2000, 10)};
  try {
    plan_poses(huge, 3, 20.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InfeasibleBox);
  }
}

TEST(Reprojection, Identical) {
  std::vector<Point2> c{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {5, 5}};
  const ReprojectionStats s = reprojection_error(c, c);
  EXPECT_EQ(s.mean, 0.0);
  EXPECT_EQ(s.std, 0.0);
  EXPECT_EQ(s.max, 0.0);
}

TEST(Reprojection, ThreeFourFive) {
  std::vector<Point2> ref{{0, 0}, {10, 0}, {0, 10}, {10, 10}};
  std::vector<Point2> obs;
  for (const Point2& p : ref) obs.push_back(p + Point2(0.3, 0.4));
  const ReprojectionStats s = reprojection_error(obs, ref);
  EXPECT_NEAR(s.mean, 0.5, 1e-12);
  EXPECT_NEAR(s.max, 0.5, 1e-12);
  EXPECT_NEAR(s.std, 0.0, 1e-12);
  ASSERT_EQ(s.per_corner_offsets.size(), 4u);
  EXPECT_FALSE(reprojection_gate(s));
}

TEST(Reprojection, RayleighMean) {
  std::vector<double> means;
  for (int seed = 0; seed < 200; ++seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n(0.0, 0.2);
    std::vector<Point2> ref, obs;
    for (int i = 0; i < 100; ++i) {
      ref.emplace_back(i, 2 * i);
      obs.push_back(ref.back() + Point2(n(gen), n(gen)));
    }
    means.push_back(reprojection_error(obs, ref).mean);
  }
  const double expected = 0.2 * std::sqrt(std::numbers::pi / 2.0);
  EXPECT_NEAR(oracle::median(means), expected, 0.15 * expected);
  EXPECT_NEAR(expected, 0.251, 1e-3);
}

TEST(Reprojection, LengthMismatch) {
  std::vector<Point2> a(5, Point2::Zero()), b(4, Point2::Zero()), c(3, Point2::Zero());
  for (auto [x, y] : {std::pair{&a, &b}, std::pair{&c, &c}}) {
    try {
      reprojection_error(*x, *y);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
    }
  }
}

TEST(RefinePosePixels, RecoversPoseFromExactPixels) {
  CameraModel cam;
  std::vector<Point3> board;
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 8; ++c) board.emplace_back(20.0 * c - 70, 20.0 * r - 50, 0);
  const RigidTransform truth = RigidTransform::translation(5, -8, 420) * RigidTransform::rot_x_deg(12) *
                               RigidTransform::rot_y_deg(-9);
  std::vector<Point2> px;
  for (const Point3& p : board) px.push_back(cam.project(truth.apply(p)));
  const RigidTransform start = RigidTransform::translation(2, 1, -6) * truth * RigidTransform::rot_z_deg(1.5);
  const PoseError e = pose_error(refine_pose_pixels(board, px, cam, start), truth);
  EXPECT_LT(e.translation_mm, 1e-6);
  EXPECT_LT(e.rotation_deg, 1e-6);
}

// Properties.

TEST(HandEyeProperty, LeftRightConsistency) {
  const auto samples = construct(true_x(), 8, 21);
  const HandEyeResult r = solve_ax_xb(samples);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const MotionPair m = relative_motion(samples[i], samples[j]);
      const PoseError e = pose_error(m.a * r.camera_in_flange, r.camera_in_flange * m.b);
      EXPECT_LT(e.rotation_deg, 1e-6);
      EXPECT_LT(e.translation_mm, 1e-6);
    }
  }
}

TEST(HandEyeProperty, ResidualShrinksWithNoise) {
  const RigidTransform x = true_x();
  double prev_rot = 1e9, prev_trans = 1e9;
  for (double level : {0.2, 0.05, 0.01}) {
    std::vector<double> rot, trans;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const HandEyeResult r = solve_ax_xb(construct(x, 10, 700 + seed, level, 2.0 * level));
      rot.push_back(r.rotation_residual);
      trans.push_back(r.translation_residual);
    }
    EXPECT_LT(oracle::median(rot), prev_rot);
    EXPECT_LT(oracle::median(trans), prev_trans);
    prev_rot = oracle::median(rot);
    prev_trans = oracle::median(trans);
  }
}

TEST(HandEyeProperty, PlanDeterministicAndInsideFrustum) {
  const CameraModel cam;
  const Box3 box{Point3(380, -80, -10), Point3(540, 80, 10)};
  const auto a = plan_poses(box, 10, 25.0, cam);
  const auto b = plan_poses(box, 10, 25.0, cam);
  ASSERT_EQ(a.size(), 10u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].matrix(), b[i].matrix());
    for (const Point3& c : box.corners()) EXPECT_TRUE(cam.fov_table.contains(a[i].inverse().apply(c)));
  }
}
