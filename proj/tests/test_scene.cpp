#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracle.hpp"
#include "snav/error.hpp"
#include "snav/scene.hpp"

using namespace snav;

namespace {

// Published sensor characterization rows: distance, fov_x, fov_y, sigma_z.
struct KnotRow {
  double d, fx, fy, sz;
};
constexpr KnotRow kPaperRows[] = {
    {250, 198.44, 129.2, 0.033},  {260, 202.37, 134.37, 0.036}, {380, 408.60, 270.68, 0.106},
    {400, 435.37, 284.93, 0.117}, {500, 565.23, 356.16, 0.183}, {600, 658.27, 427.39, 0.264},
    {700, 751.32, 498.63, 0.359},
};

TorsoPhantom flat_phantom() {
  TorsoPhantom p;
  p.base_surface.half_x = 600.0;
  p.base_surface.half_y = 400.0;
  return p;
}

CameraModel looking_down(double distance) {
  CameraModel c;
  c.mount_pose = RigidTransform::translation(0, 0, distance) * RigidTransform::rot_x_deg(180.0);
  return c;
}

double z_std(const PointCloud& cloud) {
  double mean = 0.0;
  for (const Point3& p : cloud.points) mean += p.z();
  mean /= static_cast<double>(cloud.points.size());
  double var = 0.0;
  for (const Point3& p : cloud.points) var += (p.z() - mean) * (p.z() - mean);
  return std::sqrt(var / static_cast<double>(cloud.points.size() - 1));
}

}  // namespace

TEST(SigmaZ, ExactAtPublishedKnots) {
  const CameraModel cam;
  for (const KnotRow& r : kPaperRows) {
    const Interpolated s = sigma_z(cam, r.d);
    EXPECT_DOUBLE_EQ(s.value, r.sz) << r.d;
    EXPECT_FALSE(s.clamped);
  }
}

TEST(SigmaZ, InterpolatesBetweenKnots) {
  const double expected = oracle::lerp(315.0, 260.0, 0.036, 380.0, 0.106);
  EXPECT_NEAR(sigma_z(CameraModel{}, 315.0).value, expected, 1e-12);
  EXPECT_NEAR(sigma_z(CameraModel{}, 315.0).value, 0.0681, 5e-5);
}

TEST(SigmaZ, ClampsOutsideKnotsWithFlag) {
  const Interpolated lo = sigma_z(CameraModel{}, 100.0);
  const Interpolated hi = sigma_z(CameraModel{}, 900.0);
  EXPECT_TRUE(lo.clamped);
  EXPECT_TRUE(hi.clamped);
  EXPECT_DOUBLE_EQ(lo.value, 0.033);
  EXPECT_DOUBLE_EQ(hi.value, 0.359);
}

TEST(FovTable, RejectsBadRows) {
  EXPECT_THROW(FovTable({{300, 1, 1, 0.1, 0, 0.1}, {300, 2, 2, 0.2, 0, 0.2}}), Error);
  EXPECT_THROW(FovTable({{300, 1, 1, -0.1, 0, 0.1}}), Error);
}

TEST(CameraModel, FrameRateRange) {
  CameraModel c;
  c.frame_rate = 0.05;
  EXPECT_THROW(c.validate(), Error);
  c.frame_rate = 120.0;
  EXPECT_NO_THROW(c.validate());
}

TEST(Breathing, Examples) {
  TorsoPhantom p;
  p.breathing_amplitude = 0.0;
  for (double t : {0.0, 0.3, 1.7, 10.0}) EXPECT_EQ(breathing_offset(p, t), 0.0);
  p.breathing_amplitude = 5.0;
  p.breathing_period = 4.0;
  EXPECT_NEAR(breathing_offset(p, 1.0), 5.0, 1e-12);
  EXPECT_NEAR(breathing_offset(p, 0.5), 5.0 * std::sin(std::numbers::pi / 4.0), 1e-12);
  EXPECT_NEAR(breathing_offset(p, 0.5), 3.5355, 1e-4);
}

TEST(Breathing, HoldOverridesSinusoid) {
  TorsoPhantom p;
  p.breathing_amplitude = 5.0;
  p.breath_holds.push_back({10.0, 8.0, 2.5});
  EXPECT_DOUBLE_EQ(breathing_offset(p, 12.3), 2.5);
  EXPECT_NEAR(breathing_offset(p, 9.0), 5.0, 1e-12);
}

TEST(Phantom, InvalidParametersRejected) {
  TorsoPhantom p;
  p.breathing_amplitude = -1.0;
  EXPECT_THROW(p.validate(), Error);
  p.breathing_amplitude = 1.0;
  p.breathing_period = 0.0;
  EXPECT_THROW(p.validate(), Error);
  RingMarker m;
  m.inner_diameter = 30.0;
  EXPECT_THROW(m.validate(), Error);
}

TEST(RenderCloud, NoiselessFlatPlaneAtExactDepth) {
  SceneExtras quiet;
  quiet.noise_enabled = false;
  const PointCloud c = render_cloud(flat_phantom(), std::nullopt, looking_down(400.0), 0.0, 1, quiet);
  ASSERT_GT(c.points.size(), 10000u);
  for (const Point3& p : c.points) EXPECT_NEAR(p.z(), 400.0, 1e-9);
}

TEST(RenderCloud, OccluderHidesSurfaceBehindIt) {
  SceneExtras extras;
  extras.noise_enabled = false;
  const CameraModel cam = looking_down(400.0);
  const PointCloud open = render_cloud(flat_phantom(), std::nullopt, cam, 0.0, 1, extras);
  // Box 100 mm above the plane on the sight lines to the patch around (50, 30):
  // at that height those lines sit at 3/4 of the patch coordinates.
  extras.occluders.push_back({RigidTransform::translation(37.5, 22.5, 100), Vec3(20, 20, 5)});
  const PointCloud blocked = render_cloud(flat_phantom(), std::nullopt, cam, 0.0, 1, extras);
  const RigidTransform to_phantom = cam.mount_pose;
  auto below_box = [&](const Point3& p_cam) {
    const Point3 p = to_phantom.apply(p_cam);
    return std::abs(p.z()) < 1e-6 && std::abs(p.x() - 50) < 15 && std::abs(p.y() - 30) < 15;
  };
  int open_hits = 0, blocked_hits = 0;
  for (const Point3& p : open.points) open_hits += below_box(p);
  for (const Point3& p : blocked.points) blocked_hits += below_box(p);
  EXPECT_GT(open_hits, 0);
  EXPECT_EQ(blocked_hits, 0);
}

TEST(RenderCloud, EmptyFrustumThrows) {
  CameraModel away;
  away.mount_pose = RigidTransform::translation(0, 0, 400);  // looking up, away from the plane
  try {
    render_cloud(flat_phantom(), std::nullopt, away, 0.0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCloud);
  }
}

TEST(RenderCloud, ZStdAt400MatchesTable) {
  const PointCloud c = render_cloud(flat_phantom(), std::nullopt, looking_down(400.0), 0.0, 42);
  ASSERT_GE(c.points.size(), 10000u);
  EXPECT_NEAR(z_std(c), 0.117, 0.1 * 0.117);
}

TEST(RenderCloud, RingRaisedAboveSurface) {
  SceneExtras quiet;
  quiet.noise_enabled = false;
  const TorsoPhantom p = flat_phantom();
  const RingMarker m = RingMarker::on_surface(p.base_surface, 0.0, 0.0);
  const CameraModel cam = looking_down(400.0);
  const PointCloud c = render_cloud(p, m, cam, 0.0, 1, quiet);
  int on_ring = 0;
  for (const Point3& pc : c.points) {
    const Point3 q = cam.mount_pose.apply(pc);
    const double r = std::hypot(q.x(), q.y());
    if (r > 8.5 && r < 11.5) {
      EXPECT_NEAR(q.z(), m.thickness, 1e-9);
      ++on_ring;
    }
  }
  EXPECT_GT(on_ring, 10);
  const RingTruth truth = marker_truth(p, m, 0.0);
  EXPECT_NEAR((truth.center - Point3(0, 0, m.thickness)).norm(), 0.0, 1e-12);
}

// Properties.

TEST(SceneProperty, Determinism) {
  const PointCloud a = render_cloud(flat_phantom(), std::nullopt, looking_down(380.0), 0.0, 77);
  const PointCloud b = render_cloud(flat_phantom(), std::nullopt, looking_down(380.0), 0.0, 77);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) EXPECT_EQ(a.points[i], b.points[i]);
  const PointCloud c = render_cloud(flat_phantom(), std::nullopt, looking_down(380.0), 0.0, 78);
  EXPECT_NE(a.points.front(), c.points.front());
}

TEST(SceneProperty, FrustumContainment) {
  const FovTable table = FovTable::speckle_reference();
  TorsoPhantom curved = flat_phantom();
  curved.base_surface.curvature_x = 0.001;
  curved.base_surface.curvature_y = 0.0005;
  for (double d : {255.0, 400.0, 690.0}) {
    const PointCloud c = render_cloud(curved, std::nullopt, looking_down(d), 0.0, 5);
    for (const Point3& p : c.points) {
      ASSERT_TRUE(std::isfinite(p.x()) && std::isfinite(p.y()) && std::isfinite(p.z()));
      // Oracle: half extents of the rectangle at this depth from the table.
      const double z = std::clamp(p.z(), table.near(), table.far());
      double hx = 0, hy = 0;
      for (std::size_t k = 0; k + 1 < std::size(kPaperRows); ++k) {
        const KnotRow& a = kPaperRows[k];
        const KnotRow& b = kPaperRows[k + 1];
        if (z >= a.d && z <= b.d) {
          hx = 0.5 * oracle::lerp(z, a.d, a.fx, b.d, b.fx);
          hy = 0.5 * oracle::lerp(z, a.d, a.fy, b.d, b.fy);
          break;
        }
      }
      EXPECT_LE(std::abs(p.x()), hx + 1e-9);
      EXPECT_LE(std::abs(p.y()), hy + 1e-9);
    }
  }
}

TEST(SceneProperty, NoiseScalingAtEveryKnot) {
  for (const KnotRow& r : kPaperRows) {
    const PointCloud c = render_cloud(flat_phantom(), std::nullopt, looking_down(r.d), 0.0, 9);
    ASSERT_GE(c.points.size(), 10000u) << r.d;
    EXPECT_NEAR(z_std(c), r.sz, 0.1 * r.sz) << r.d;
  }
}

TEST(SceneProperty, BreathingPeriodicity) {
  TorsoPhantom p = flat_phantom();
  p.breathing_amplitude = 5.0;
  p.breathing_period = 4.0;
  const RingMarker m = RingMarker::on_surface(p.base_surface, 10.0, -5.0);
  SceneExtras quiet;
  quiet.noise_enabled = false;
  for (double t : {0.3, 1.1, 2.9}) {
    const PointCloud a = render_cloud(p, m, looking_down(400.0), t, 3, quiet);
    const PointCloud b = render_cloud(p, m, looking_down(400.0), t + 4.0, 3, quiet);
    ASSERT_EQ(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) EXPECT_LE((a.points[i] - b.points[i]).norm(), 1e-9);
  }
}
