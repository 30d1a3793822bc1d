#pragma once

#include <optional>
#include <span>
#include <string>

#include "snav/geometry.hpp"
#include "snav/scene.hpp"

namespace snav {

struct FieldOfView {
  double fov_x = 0.0;
  double fov_y = 0.0;
  bool clamped = false;  ///< distance fell outside the knot range
};

FieldOfView field_of_view(const CameraModel& camera, double distance);

/// Smallest distance in the knot range at which a rect_x by rect_y
/// rectangle fits the field of view; nullopt when it does not fit even at
/// the far knot.
std::optional<double> observation_rectangle_fit(const CameraModel& camera, double rect_x, double rect_y);

struct ViewFrustum {
  double near = 0.0;
  double far = 0.0;
  FovTable fov_table = FovTable::speckle_reference();

  /// near/far clamped into the table's knot range.
  ViewFrustum(double near, double far, FovTable table);
  static ViewFrustum of(const CameraModel& camera);

  bool contains(const Point3& p_camera) const;
};

enum class Visibility { Visible, OutsideFrustum, Occluded };
std::string to_string(Visibility v);

/// Target visible iff it sits inside the frustum and the camera-to-target
/// segment crosses no occluder. Occluders and target are in the frame
/// `camera_pose` is expressed in.
Visibility blind_spot_check(const RigidTransform& camera_pose, const ViewFrustum& frustum,
                            std::span<const OrientedBox> occluders, const Point3& target);

struct AccuracyRange {
  double low = 0.0;
  double high = 0.0;
  std::string note;
};

/// Rule of thumb: accuracy is 1-5 % of the observation space edge length.
AccuracyRange accuracy_estimate(double observation_space_extent);

}  // namespace snav
