#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <span>

namespace snav {

/// Millimetres, everywhere.
using Point3 = Eigen::Vector3d;
using Vec3 = Eigen::Vector3d;
using Point2 = Eigen::Vector2d;

/// Tolerance for identities that hold in exact arithmetic.
inline constexpr double kExactTol = 1e-9;

constexpr double deg2rad(double deg) { return deg * 0.017453292519943295; }
constexpr double rad2deg(double rad) { return rad * 57.29577951308232; }

bool is_finite(const Vec3& v);

/// SE(3) pose: a unit quaternion kept in canonical sign (w >= 0, and for
/// w == 0 the first nonzero vector component positive) plus a translation.
/// Immutable after construction.
class RigidTransform {
 public:
  RigidTransform();
  /// Normalizes and canonicalizes q. Throws InvalidArgument on non-finite
  /// input or a zero quaternion.
  RigidTransform(const Eigen::Quaterniond& q, const Vec3& t);

  static RigidTransform identity() { return {}; }
  static RigidTransform translation(double x, double y, double z);
  static RigidTransform translation(const Vec3& t);
  static RigidTransform rotation(const Vec3& axis, double angle_rad);
  static RigidTransform rot_x_deg(double deg);
  static RigidTransform rot_y_deg(double deg);
  static RigidTransform rot_z_deg(double deg);
  /// Projects R onto SO(3) first, so slightly non-orthonormal input is accepted.
  static RigidTransform from_matrix(const Eigen::Matrix3d& rotation, const Vec3& t);

  const Eigen::Quaterniond& quaternion() const { return q_; }
  const Vec3& translation() const { return t_; }
  Eigen::Matrix3d rotation_matrix() const { return q_.toRotationMatrix(); }
  Eigen::Matrix4d matrix() const;

  Point3 apply(const Point3& p) const { return q_ * p + t_; }
  Vec3 rotate(const Vec3& v) const { return q_ * v; }

  /// (a * b)(p) == a(b(p))
  RigidTransform operator*(const RigidTransform& rhs) const;
  RigidTransform inverse() const;

 private:
  Eigen::Quaterniond q_;
  Vec3 t_;
};

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);
inline Point3 transform_point(const RigidTransform& t, const Point3& p) { return t.apply(p); }

/// Angle of a rotation in degrees, in [0, 180].
double rotation_angle_deg(const Eigen::Quaterniond& q);

struct PoseError {
  double rotation_deg = 0.0;
  double translation_mm = 0.0;
};

/// Rotation: angle of a^-1 b. Translation: distance between the two origins.
PoseError pose_error(const RigidTransform& a, const RigidTransform& b);

/// Least-squares rigid map taking `from[i]` onto `to[i]` (Kabsch). Needs at
/// least three non-collinear correspondences.
RigidTransform fit_rigid(std::span<const Point3> from, std::span<const Point3> to);

/// Rotation taking +z onto `direction` with the smallest angle.
Eigen::Quaterniond rotation_from_z(const Vec3& direction);

/// Convex box: `pose` places the box frame, extents are half side lengths.
struct OrientedBox {
  RigidTransform pose;
  Vec3 half_extents = Vec3::Zero();

  bool contains(const Point3& p) const;
  /// Smallest ray parameter in [s_min, s_max] where origin + s*dir enters
  /// the box, or s_min itself if the origin is already inside.
  std::optional<double> intersect(const Point3& origin, const Vec3& dir, double s_min,
                                  double s_max) const;
};

}  // namespace snav
