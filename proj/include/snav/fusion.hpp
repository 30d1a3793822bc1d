#pragma once

#include <optional>
#include <span>

#include <Eigen/Core>

#include "snav/geometry.hpp"
#include "snav/marker.hpp"

namespace snav {

struct BasePoint {
  Point3 position;
  Vec3 normal;
};

/// flange_in_base * hand_eye applied to the marker center; normal rotated.
BasePoint marker_in_base(const RigidTransform& hand_eye, const RigidTransform& flange_in_base,
                         const MarkerPose& marker_in_camera);

/// A point the camera reported and the pendant reading once the robot reached it.
struct ExecutionRecord {
  Point3 camera_observed;
  Point3 robot_executed;

  Point3 difference() const { return robot_executed - camera_observed; }
};

enum class CorrectionModel {
  PerAxis,  ///< executed_k = scale_k * observed_k + offset_k
  FullAffine,  ///< executed = M * observed + offset
};

/// Maps camera-observed coordinates onto the coordinates the robot must be
/// commanded to.
struct TcpCorrection {
  Vec3 scale = Vec3::Ones();
  Vec3 offset = Vec3::Zero();
  std::optional<Eigen::Matrix3d> linear;  ///< set only for the full affine model
  int fit_pair_count = 0;
  double fit_rms = 0.0;

  static constexpr double kMinScale = 0.9;
  static constexpr double kMaxScale = 1.1;
};

/// Per-axis least squares with >= 4 records; with 1-3 records the scale is
/// pinned to 1 and the offset is the mean difference. fit_rms is the RMS of
/// the 3-D post-fit residual. Throws EmptyRecords, or CorrectionOutOfRange
/// when a fitted scale leaves [0.9, 1.1].
TcpCorrection fit_tcp_correction(std::span<const ExecutionRecord> records,
                                 CorrectionModel model = CorrectionModel::PerAxis);

Point3 apply_correction(const TcpCorrection& correction, const Point3& observed);

}  // namespace snav
