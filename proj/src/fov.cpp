#include "snav/fov.hpp"

#include <algorithm>
#include <cmath>

#include "snav/error.hpp"

namespace snav {

FieldOfView field_of_view(const CameraModel& camera, double distance) {
  const Interpolated x = camera.fov_table.fov_x(distance);
  const Interpolated y = camera.fov_table.fov_y(distance);
  return {x.value, y.value, x.clamped || y.clamped};
}

std::optional<double> observation_rectangle_fit(const CameraModel& camera, double rect_x, double rect_y) {
  if (!(rect_x > 0.0 && rect_y > 0.0)) throw Error(ErrorCode::InvalidArgument, "rectangle dimensions must be positive");
  const FovTable& table = camera.fov_table;
  auto fits = [&](double d) { return table.fov_x(d).value >= rect_x && table.fov_y(d).value >= rect_y; };
  double lo = table.near();
  double hi = table.far();
  if (fits(lo)) return lo;
  if (!fits(hi)) return std::nullopt;
  // Both FOV columns increase with distance, so feasibility is monotone.
  while (hi - lo > 1e-10 * hi) {
    const double mid = 0.5 * (lo + hi);
    (fits(mid) ? hi : lo) = mid;
  }
  return hi;
}

ViewFrustum::ViewFrustum(double near_, double far_, FovTable table) : fov_table(std::move(table)) {
  near = std::clamp(near_, fov_table.near(), fov_table.far());
  far = std::clamp(far_, fov_table.near(), fov_table.far());
  if (!(near < far)) throw Error(ErrorCode::InvalidArgument, "frustum needs near < far");
}

ViewFrustum ViewFrustum::of(const CameraModel& camera) {
  return {camera.fov_table.near(), camera.fov_table.far(), camera.fov_table};
}

bool ViewFrustum::contains(const Point3& p) const {
  if (!(p.z() >= near && p.z() <= far)) return false;
  return std::abs(p.x()) <= 0.5 * fov_table.fov_x(p.z()).value && std::abs(p.y()) <= 0.5 * fov_table.fov_y(p.z()).value;
}

std::string to_string(Visibility v) {
  switch (v) {
    case Visibility::Visible: return "Visible";
    case Visibility::OutsideFrustum: return "OutsideFrustum";
    case Visibility::Occluded: return "Occluded";
  }
  return "Unknown";
}

Visibility blind_spot_check(const RigidTransform& camera_pose, const ViewFrustum& frustum,
                            std::span<const OrientedBox> occluders, const Point3& target) {
  if (!frustum.contains(camera_pose.inverse().apply(target))) return Visibility::OutsideFrustum;
  const Point3 origin = camera_pose.translation();
  const Vec3 seg = target - origin;
  // A target lying on an occluder's face does not hide itself.
  constexpr double kEndSlack = 1e-9;
  for (const OrientedBox& box : occluders) {
    if (box.intersect(origin, seg, 0.0, 1.0 - kEndSlack)) return Visibility::Occluded;
  }
  return Visibility::Visible;
}

AccuracyRange accuracy_estimate(double extent) {
  if (!(extent > 0.0) || !std::isfinite(extent)) {
    throw Error(ErrorCode::InvalidArgument, "observation space extent must be positive");
  }
  return {0.01 * extent, 0.05 * extent,
          "rule of thumb on edge length; the measured Z accuracy at 250-700 mm is sub-millimetre and "
          "far tighter than this range"};
}

}  // namespace snav
