#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "snav/error.hpp"
#include "snav/geometry.hpp"

using namespace snav;

namespace {

void expect_same(const RigidTransform& a, const RigidTransform& b, double tol = kExactTol) {
  EXPECT_LE((a.matrix() - b.matrix()).cwiseAbs().maxCoeff(), tol);
}

}  // namespace

TEST(Compose, IdentityIsNeutral) {
  const RigidTransform t = RigidTransform::translation(1, -2, 3) * RigidTransform::rot_x_deg(33);
  expect_same(compose(t, RigidTransform::identity()), t);
  expect_same(compose(RigidTransform::identity(), t), t);
}

TEST(Compose, TranslationsAdd) {
  expect_same(compose(RigidTransform::translation(2, 0, 0), RigidTransform::translation(3, 0, 0)),
              RigidTransform::translation(5, 0, 0));
}

TEST(Compose, RotZ90ThenTranslateMapsOriginToY) {
  const RigidTransform t = compose(RigidTransform::rot_z_deg(90), RigidTransform::translation(1, 0, 0));
  const Eigen::Vector3d expected = oracle::apply(oracle::rot_z(90) * oracle::translate(1, 0, 0), Point3::Zero());
  const Point3 p = t.apply(Point3::Zero());
  EXPECT_NEAR((p - expected).norm(), 0.0, kExactTol);
  EXPECT_NEAR((p - Point3(0, 1, 0)).norm(), 0.0, kExactTol);
}

TEST(Invert, Identity) { expect_same(invert(RigidTransform::identity()), RigidTransform::identity()); }

TEST(Invert, Translation) {
  expect_same(invert(RigidTransform::translation(1, 2, 3)), RigidTransform::translation(-1, -2, -3));
}

TEST(Invert, UndoesComposeExample) {
  const RigidTransform t = compose(RigidTransform::rot_z_deg(90), RigidTransform::translation(1, 0, 0));
  EXPECT_NEAR(invert(t).apply(Point3(0, 1, 0)).norm(), 0.0, kExactTol);
}

TEST(Invert, ComposeWithInverseIsIdentity) {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 200; ++i) {
    const auto t = oracle::random_pose(gen).transform;
    expect_same(compose(t, invert(t)), RigidTransform::identity());
    expect_same(compose(invert(t), t), RigidTransform::identity());
  }
}

TEST(PoseError, SelfIsZero) {
  const RigidTransform t = RigidTransform::translation(4, 5, 6) * RigidTransform::rot_y_deg(71);
  const PoseError e = pose_error(t, t);
  EXPECT_NEAR(e.rotation_deg, 0.0, 1e-6);
  EXPECT_NEAR(e.translation_mm, 0.0, kExactTol);
}

TEST(PoseError, AntipodalRotation) {
  const PoseError e = pose_error(RigidTransform::identity(), RigidTransform::rot_z_deg(180));
  EXPECT_NEAR(e.rotation_deg, 180.0, 1e-9);
  EXPECT_NEAR(e.translation_mm, 0.0, kExactTol);
}

TEST(PoseError, ThirtyDegreesFiveMillimetres) {
  const RigidTransform b = compose(RigidTransform::rot_z_deg(30), RigidTransform::translation(3, 4, 0));
  const PoseError e = pose_error(RigidTransform::identity(), b);
  // Oracle: angle from the trace of the relative rotation, distance of the
  // rotated (3,4,0) offset.
  const oracle::Mat4 m = oracle::rot_z(30) * oracle::translate(3, 4, 0);
  EXPECT_NEAR(e.rotation_deg, oracle::angle_deg(m.topLeftCorner<3, 3>()), 1e-9);
  EXPECT_NEAR(e.translation_mm, m.col(3).head<3>().norm(), 1e-9);
  EXPECT_NEAR(e.rotation_deg, 30.0, 1e-9);
  EXPECT_NEAR(e.translation_mm, 5.0, 1e-9);
}

TEST(RigidTransform, MatchesMatrixOracle) {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 100; ++i) {
    const auto a = oracle::random_pose(gen);
    const auto b = oracle::random_pose(gen);
    const oracle::Mat4 expected = a.matrix * b.matrix;
    EXPECT_LE((compose(a.transform, b.transform).matrix() - expected).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(RigidTransform, UnitQuaternionAndCanonicalSign) {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 100; ++i) {
    const auto t = oracle::random_pose(gen).transform;
    EXPECT_NEAR(t.quaternion().norm(), 1.0, 1e-9);
    EXPECT_GE(t.quaternion().w(), 0.0);
    const Eigen::Matrix3d r = t.rotation_matrix();
    EXPECT_LE((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
  }
  // q and -q describe the same rotation and serialize identically.
  const Eigen::Quaterniond q(-0.5, 0.5, -0.5, 0.5);
  const RigidTransform a(q, Vec3::Zero());
  const RigidTransform b(Eigen::Quaterniond(0.5, -0.5, 0.5, -0.5), Vec3::Zero());
  EXPECT_EQ(a.quaternion().coeffs(), b.quaternion().coeffs());
}

TEST(RigidTransform, RejectsBadInput) {
  EXPECT_THROW(RigidTransform(Eigen::Quaterniond(0, 0, 0, 0), Vec3::Zero()), Error);
  EXPECT_THROW(RigidTransform(Eigen::Quaterniond::Identity(), Vec3(std::nan(""), 0, 0)), Error);
}

TEST(RigidTransform, FromMatrixProjectsOntoRotations) {
  Eigen::Matrix3d r = oracle::rot_z(40).topLeftCorner<3, 3>();
  r(0, 1) += 1e-4;
  const RigidTransform t = RigidTransform::from_matrix(r, Vec3(1, 2, 3));
  EXPECT_NEAR(t.rotation_matrix().determinant(), 1.0, 1e-12);
  EXPECT_NEAR(rotation_angle_deg(t.quaternion()), 40.0, 0.01);
}

TEST(FitRigid, RecoversKnownPose) {
  std::mt19937_64 gen(5);
  const auto pose = oracle::random_pose(gen);
  std::vector<Point3> from, to;
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 20; ++i) {
    from.emplace_back(u(gen), u(gen), u(gen));
    to.push_back(oracle::apply(pose.matrix, from.back()));
  }
  EXPECT_LE((fit_rigid(from, to).matrix() - pose.matrix).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FitRigid, CollinearIsDegenerate) {
  const std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  EXPECT_THROW(fit_rigid(pts, pts), Error);
}

TEST(OrientedBox, SlabIntersection) {
  const OrientedBox box{RigidTransform::translation(0, 0, 10), Vec3(1, 1, 1)};
  const auto hit = box.intersect(Point3::Zero(), Vec3(0, 0, 1), 0.0, 100.0);
  ASSERT_TRUE(hit);
  EXPECT_NEAR(*hit, 9.0, 1e-12);
  EXPECT_FALSE(box.intersect(Point3::Zero(), Vec3(1, 0, 0), 0.0, 100.0));
  EXPECT_TRUE(box.contains(Point3(0.5, -0.5, 10.9)));
}

// Properties.

TEST(GeometryProperty, Associativity) {
  std::mt19937_64 gen(101);
  for (int i = 0; i < 500; ++i) {
    const auto a = oracle::random_pose(gen).transform;
    const auto b = oracle::random_pose(gen).transform;
    const auto c = oracle::random_pose(gen).transform;
    expect_same(compose(compose(a, b), c), compose(a, compose(b, c)));
  }
}

TEST(GeometryProperty, Isometry) {
  std::mt19937_64 gen(202);
  std::uniform_real_distribution<double> u(-1000, 1000);
  for (int i = 0; i < 500; ++i) {
    const auto t = oracle::random_pose(gen).transform;
    const Point3 p(u(gen), u(gen), u(gen));
    const Point3 q(u(gen), u(gen), u(gen));
    EXPECT_NEAR((transform_point(t, p) - transform_point(t, q)).norm(), (p - q).norm(), 1e-9);
  }
}

TEST(GeometryProperty, PoseErrorSymmetric) {
  std::mt19937_64 gen(303);
  for (int i = 0; i < 500; ++i) {
    const auto a = oracle::random_pose(gen).transform;
    const auto b = oracle::random_pose(gen).transform;
    const PoseError ab = pose_error(a, b);
    const PoseError ba = pose_error(b, a);
    EXPECT_NEAR(ab.rotation_deg, ba.rotation_deg, 1e-9);
    EXPECT_NEAR(ab.translation_mm, ba.translation_mm, 1e-9);
    EXPECT_GE(ab.rotation_deg, 0.0);
    EXPECT_LE(ab.rotation_deg, 180.0);
  }
}
