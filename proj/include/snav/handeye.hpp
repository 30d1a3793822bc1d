#pragma once

#include <span>
#include <string>
#include <vector>

#include "snav/geometry.hpp"
#include "snav/scene.hpp"

namespace snav {

/// One robot station: where the flange was, and where the camera saw the target.
struct CalibrationSample {
  RigidTransform flange_in_base;
  RigidTransform target_in_camera;
};

struct HandEyeResult {
  RigidTransform camera_in_flange;  ///< X in A X = X B
  double rotation_residual = 0.0;  ///< degrees, RMS over motion pairs
  double translation_residual = 0.0;  ///< mm, RMS over motion pairs
  int sample_count = 0;
  int pair_count = 0;
  std::string solver = "park-martin";
};

/// Relative motions of a sample pair, oriented so that A X = X B holds for
/// an eye-in-hand camera looking at a target fixed in the base frame.
struct MotionPair {
  RigidTransform a;  ///< flange_j^-1 * flange_i
  RigidTransform b;  ///< target_j * target_i^-1
};
MotionPair relative_motion(const CalibrationSample& i, const CalibrationSample& j);

/// Rotation from the log maps of every motion pair (Park-Martin least
/// squares, computed as the orthogonal polar factor), then translation by
/// linear least squares. Throws TooFewSamples (< 3) or InsufficientMotion
/// (no two motions whose rotation axes differ by 5 degrees or more).
HandEyeResult solve_ax_xb(std::span<const CalibrationSample> samples);

/// Axis-aligned box, millimetres.
struct Box3 {
  Point3 min = Point3::Zero();
  Point3 max = Point3::Zero();
  Point3 center() const { return 0.5 * (min + max); }
  std::vector<Point3> corners() const;
};

/// Camera poses (camera in the box's frame, +z optical axis) that look at
/// the box center from spread standoffs and tilt directions. Consecutive
/// relative rotations have pairwise axis separation >= 10 degrees when
/// count <= 12, and every pose keeps the whole box inside the frustum.
/// Throws TooFewSamples (count < 3), InvalidArgument (tilt outside (0, 60]),
/// InfeasibleBox.
std::vector<RigidTransform> plan_poses(const Box3& observation_box, int count, double tilt_range_deg,
                                       const CameraModel& camera = {});

/// Angle between two rotation axes treated as lines, degrees in [0, 90].
double axis_separation_deg(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

struct ReprojectionStats {
  double mean = 0.0;
  double std = 0.0;
  double max = 0.0;
  std::vector<double> per_corner_offsets;
};

/// Per-corner Euclidean offsets (pixels) and their statistics. Throws
/// LengthMismatch for unequal lists or fewer than 4 corners.
ReprojectionStats reprojection_error(std::span<const Point2> observed, std::span<const Point2> reference);

/// Target pose refined so the pinhole projections of `model` (target frame)
/// match `pixels`; Levenberg-Marquardt from `initial`.
RigidTransform refine_pose_pixels(std::span<const Point3> model, std::span<const Point2> pixels, const CameraModel& camera,
                                  const RigidTransform& initial);

inline constexpr double kReprojectionGatePx = 0.5;

/// Pre-execution gate: mean reprojection error strictly below the threshold.
inline bool reprojection_gate(const ReprojectionStats& stats, double threshold_px = kReprojectionGatePx) {
  return stats.mean < threshold_px;
}

}  // namespace snav
