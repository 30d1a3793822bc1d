#include "snav/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

#include "snav/error.hpp"

namespace snav {

namespace {

Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::InvalidArgument, "quaternion must be finite and nonzero");
  }
  // Leaving near-unit input untouched keeps serialization round trips exact.
  if (std::abs(n - 1.0) > 8.0 * std::numeric_limits<double>::epsilon()) q.coeffs() /= n;
  double sign = 1.0;
  if (q.w() < 0.0) {
    sign = -1.0;
  } else if (q.w() == 0.0) {
    for (double c : {q.x(), q.y(), q.z()}) {
      if (c != 0.0) {
        sign = c < 0.0 ? -1.0 : 1.0;
        break;
      }
    }
  }
  q.coeffs() *= sign;
  return q;
}

}  // namespace

bool is_finite(const Vec3& v) { return v.allFinite(); }

RigidTransform::RigidTransform() : q_(Eigen::Quaterniond::Identity()), t_(Vec3::Zero()) {}

RigidTransform::RigidTransform(const Eigen::Quaterniond& q, const Vec3& t) : q_(canonical(q)), t_(t) {
  if (!is_finite(t)) throw Error(ErrorCode::InvalidArgument, "translation must be finite");
}

RigidTransform RigidTransform::translation(double x, double y, double z) {
  return {Eigen::Quaterniond::Identity(), Vec3(x, y, z)};
}

RigidTransform RigidTransform::translation(const Vec3& t) { return {Eigen::Quaterniond::Identity(), t}; }

RigidTransform RigidTransform::rotation(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::InvalidArgument, "rotation axis must be nonzero");
  return {Eigen::Quaterniond(Eigen::AngleAxisd(angle_rad, axis / n)), Vec3::Zero()};
}

RigidTransform RigidTransform::rot_x_deg(double deg) { return rotation(Vec3::UnitX(), deg2rad(deg)); }
RigidTransform RigidTransform::rot_y_deg(double deg) { return rotation(Vec3::UnitY(), deg2rad(deg)); }
RigidTransform RigidTransform::rot_z_deg(double deg) { return rotation(Vec3::UnitZ(), deg2rad(deg)); }

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix3d& rotation, const Vec3& t) {
  if (!rotation.allFinite()) throw Error(ErrorCode::InvalidArgument, "rotation matrix must be finite");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = svd.matrixU() * d * svd.matrixV().transpose();
  return {Eigen::Quaterniond(r), t};
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = t_;
  return m;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  return {q_ * rhs.q_, q_ * rhs.t_ + t_};
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Quaterniond qi = q_.conjugate();
  return {qi, -(qi * t_)};
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }
RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

double rotation_angle_deg(const Eigen::Quaterniond& q) {
  return rad2deg(2.0 * std::atan2(q.vec().norm(), std::abs(q.w())));
}

PoseError pose_error(const RigidTransform& a, const RigidTransform& b) {
  const Eigen::Quaterniond rel = a.quaternion().conjugate() * b.quaternion();
  return {rotation_angle_deg(rel), (a.translation() - b.translation()).norm()};
}

RigidTransform fit_rigid(std::span<const Point3> from, std::span<const Point3> to) {
  if (from.size() != to.size()) throw Error(ErrorCode::LengthMismatch, "correspondence sets differ in size");
  if (from.size() < 3) throw Error(ErrorCode::TooFewPoints, "rigid fit needs three correspondences");
  Vec3 cf = Vec3::Zero();
  Vec3 ct = Vec3::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) {
    cf += from[i];
    ct += to[i];
  }
  cf /= static_cast<double>(from.size());
  ct /= static_cast<double>(to.size());
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) h += (from[i] - cf) * (to[i] - ct).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (!(s(1) > 1e-12 * std::max(s(0), 1e-300))) {
    throw Error(ErrorCode::DegenerateGeometry, "correspondences are collinear");
  }
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
  return RigidTransform::from_matrix(r, ct - r * cf);
}

Eigen::Quaterniond rotation_from_z(const Vec3& direction) {
  return Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), direction.normalized());
}

bool OrientedBox::contains(const Point3& p) const {
  const Point3 local = pose.inverse().apply(p);
  return (local.cwiseAbs().array() <= half_extents.array()).all();
}

std::optional<double> OrientedBox::intersect(const Point3& origin, const Vec3& dir, double s_min,
                                             double s_max) const {
  const RigidTransform inv = pose.inverse();
  const Point3 o = inv.apply(origin);
  const Vec3 d = inv.rotate(dir);
  double lo = s_min;
  double hi = s_max;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d(k)) < 1e-300) {
      if (std::abs(o(k)) > half_extents(k)) return std::nullopt;
      continue;
    }
    double a = (-half_extents(k) - o(k)) / d(k);
    double b = (half_extents(k) - o(k)) / d(k);
    if (a > b) std::swap(a, b);
    lo = std::max(lo, a);
    hi = std::min(hi, b);
    if (lo > hi) return std::nullopt;
  }
  return lo;
}

}  // namespace snav
