#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "snav/geometry.hpp"

namespace snav {

class CounterRng;

/// One row of the sensor characterization table.
struct FovRow {
  double distance = 0.0;  ///< observation distance along the optical axis
  double fov_x = 0.0;
  double fov_y = 0.0;
  double sigma_z = 0.0;  ///< Z-axis accuracy
  double optical_blur = 0.0;  ///< pixels; stored, not used by rendering
  double pixel_size = 0.0;
};

/// Interpolated value plus whether the query fell outside the knot range.
struct Interpolated {
  double value = 0.0;
  bool clamped = false;
};

/// Distance-indexed sensor table, piecewise-linear between knots and clamped
/// outside them.
class FovTable {
 public:
  /// Throws InvalidArgument unless distances strictly increase and every
  /// entry except optical blur is positive.
  explicit FovTable(std::vector<FovRow> rows);

  /// The seven measured rows of the speckle camera (250 ... 700 mm).
  static FovTable speckle_reference();

  const std::vector<FovRow>& rows() const { return rows_; }
  double near() const { return rows_.front().distance; }
  double far() const { return rows_.back().distance; }

  Interpolated sigma_z(double distance) const;
  Interpolated fov_x(double distance) const;
  Interpolated fov_y(double distance) const;
  Interpolated pixel_size(double distance) const;

  /// Largest fov/(2 d) over the knots; the ray grid spans these tangents.
  double max_half_tan_x() const;
  double max_half_tan_y() const;

  /// Inside [near, far] and inside the FOV rectangle at the point's depth.
  bool contains(const Point3& p_camera, double margin = 0.0) const;
  /// Inside the FOV rectangle at the point's depth (clamped beyond the
  /// knots); depth range not checked.
  bool in_image(const Point3& p_camera, double margin = 0.0) const;

 private:
  Interpolated interpolate(double distance, double FovRow::*column) const;
  std::vector<FovRow> rows_;
};

struct CameraModel {
  FovTable fov_table = FovTable::speckle_reference();
  RigidTransform mount_pose;  ///< camera in its parent frame; +z is the optical axis
  double lateral_sigma_factor = 1.8;
  double frame_rate = 10.0;
  int columns = 320;
  int rows = 200;

  /// Throws InvalidArgument if any invariant is broken.
  void validate() const;

  /// Pinhole focal length in pixels, taken from the pixel size at 400 mm
  /// (clamped into the table range).
  double focal_px() const;
  Point2 project(const Point3& p_camera) const;
};

Interpolated sigma_z(const CameraModel& camera, double distance);

/// z = height + curvature_x * x^2 + curvature_y * y^2 over |x| <= half_x, |y| <= half_y.
struct HeightField {
  double height = 0.0;
  double curvature_x = 0.0;
  double curvature_y = 0.0;
  double half_x = 300.0;
  double half_y = 300.0;

  double at(double x, double y) const { return height + curvature_x * x * x + curvature_y * y * y; }
  /// Upward unit normal of the surface at (x, y).
  Vec3 normal(double x, double y) const;
  bool covers(double x, double y) const { return std::abs(x) <= half_x && std::abs(y) <= half_y; }
};

/// Breath hold: over [start, start + duration) the surface is held at `level`.
struct BreathHold {
  double start = 0.0;
  double duration = 0.0;
  double level = 0.0;
};

struct TorsoPhantom {
  HeightField base_surface;
  double breathing_amplitude = 0.0;
  double breathing_period = 4.0;
  double breathing_phase = 0.0;
  std::vector<BreathHold> breath_holds;

  void validate() const;
};

/// Surface offset along the phantom's +z at time t.
double breathing_offset(const TorsoPhantom& phantom, double t);

/// Flat annulus of `thickness` whose base sits at z = 0 of `pose_on_surface`
/// (expressed in the phantom frame at zero breathing offset).
struct RingMarker {
  double outer_diameter = 24.0;
  double inner_diameter = 16.0;
  double thickness = 2.0;
  RigidTransform pose_on_surface;

  void validate() const;
  /// Marker tangent to the surface at (x, y), optionally spun about its normal.
  static RingMarker on_surface(const HeightField& surface, double x, double y, double spin_deg = 0.0);
};

/// Ground-truth ring: top-face center and upward normal.
struct RingTruth {
  Point3 center;
  Vec3 normal;
};

/// Truth in the phantom frame at time t.
RingTruth marker_truth(const TorsoPhantom& phantom, const RingMarker& marker, double t);

struct PointCloud {
  std::vector<Point3> points;
  double timestamp = 0.0;
  std::uint64_t seed = 0;
  /// Where the sensor sits in the frame of `points`.
  Point3 sensor_origin = Point3::Zero();
};

/// Applies t to every point and to the sensor origin.
PointCloud transform_cloud(const RigidTransform& t, const PointCloud& cloud);

struct SceneExtras {
  std::vector<OrientedBox> occluders;  ///< phantom frame
  bool noise_enabled = true;
};

/// Adds depth-camera noise to a camera-frame point: along the viewing ray so
/// that depth moves by N(0, sigma_z(depth)), plus N(0, lateral * sigma_z) in
/// camera x and y.
Point3 perturb(const CameraModel& camera, const Point3& p_camera, CounterRng& rng);

/// Casts one ray per grid cell, keeps first hits inside the frustum, then
/// perturbs them and drops measurements that leave the image rectangle. The camera's mount_pose places it in the phantom frame.
/// Throws EmptyCloud when nothing is hit.
PointCloud render_cloud(const TorsoPhantom& phantom, const std::optional<RingMarker>& marker,
                        const CameraModel& camera, double t, std::uint64_t seed,
                        const SceneExtras& extras = {});

}  // namespace snav
