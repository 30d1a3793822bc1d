#include "snav/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "snav/error.hpp"
#include "snav/rng.hpp"

namespace snav {

namespace {

constexpr double kNoHit = std::numeric_limits<double>::infinity();
constexpr double kMinRay = 1e-6;

/// Ascending real roots of a s^2 + b s + c = 0 (linear when a is negligible).
int solve_quadratic(double a, double b, double c, double roots[2]) {
  if (std::abs(a) < 1e-14 * std::max(std::abs(b), 1.0)) {
    if (b == 0.0) return 0;
    roots[0] = -c / b;
    return 1;
  }
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return 0;
  const double sq = std::sqrt(disc);
  // Numerically stable pair.
  const double q = -0.5 * (b + std::copysign(sq, b));
  double r0 = q / a;
  double r1 = q != 0.0 ? c / q : r0;
  if (r0 > r1) std::swap(r0, r1);
  roots[0] = r0;
  roots[1] = r1;
  return 2;
}

double hit_surface(const HeightField& f, double offset, const Point3& o, const Vec3& d) {
  const double a = -(f.curvature_x * d.x() * d.x() + f.curvature_y * d.y() * d.y());
  const double b = d.z() - 2.0 * (f.curvature_x * o.x() * d.x() + f.curvature_y * o.y() * d.y());
  const double c = o.z() - f.height - offset - f.curvature_x * o.x() * o.x() - f.curvature_y * o.y() * o.y();
  double roots[2];
  const int n = solve_quadratic(a, b, c, roots);
  for (int i = 0; i < n; ++i) {
    const double s = roots[i];
    if (s <= kMinRay) continue;
    const Point3 p = o + s * d;
    if (f.covers(p.x(), p.y())) return s;
  }
  return kNoHit;
}

/// Ray against a solid annulus slab in its own frame.
double hit_annulus(double r_in, double r_out, double thickness, const Point3& o, const Vec3& d) {
  double best = kNoHit;
  const double ri2 = r_in * r_in;
  const double ro2 = r_out * r_out;
  if (std::abs(d.z()) > 1e-300) {
    for (double zp : {0.0, thickness}) {
      const double s = (zp - o.z()) / d.z();
      if (s <= kMinRay || s >= best) continue;
      const double x = o.x() + s * d.x();
      const double y = o.y() + s * d.y();
      const double r2 = x * x + y * y;
      if (r2 >= ri2 && r2 <= ro2) best = s;
    }
  }
  const double a = d.x() * d.x() + d.y() * d.y();
  const double b = 2.0 * (o.x() * d.x() + o.y() * d.y());
  const double c0 = o.x() * o.x() + o.y() * o.y();
  for (double r2 : {ri2, ro2}) {
    double roots[2];
    const int n = solve_quadratic(a, b, c0 - r2, roots);
    for (int i = 0; i < n; ++i) {
      const double s = roots[i];
      if (s <= kMinRay || s >= best) continue;
      const double z = o.z() + s * d.z();
      if (z >= 0.0 && z <= thickness) best = s;
    }
  }
  return best;
}

}  // namespace

FovTable::FovTable(std::vector<FovRow> rows) : rows_(std::move(rows)) {
  if (rows_.empty()) throw Error(ErrorCode::InvalidArgument, "fov table is empty");
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const FovRow& r = rows_[i];
    if (!(r.distance > 0.0 && r.fov_x > 0.0 && r.fov_y > 0.0 && r.sigma_z > 0.0 && r.pixel_size > 0.0) ||
        !(r.optical_blur >= 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "fov table entries must be positive");
    }
    if (i > 0 && !(r.distance > rows_[i - 1].distance)) {
      throw Error(ErrorCode::InvalidArgument, "fov table distances must strictly increase");
    }
  }
}

FovTable FovTable::speckle_reference() {
  return FovTable({
      {250.0, 198.44, 129.2, 0.033, 1.610, 0.106},
      {260.0, 202.37, 134.37, 0.036, 2.378, 0.111},
      {380.0, 408.60, 270.68, 0.106, 2.377, 0.223},
      {400.0, 435.37, 284.93, 0.117, 1.937, 0.234},
      {500.0, 565.23, 356.16, 0.183, 0.262, 0.293},
      {600.0, 658.27, 427.39, 0.264, 1.304, 0.352},
      {700.0, 751.32, 498.63, 0.359, 2.051, 0.41},
  });
}

Interpolated FovTable::interpolate(double distance, double FovRow::*column) const {
  if (!std::isfinite(distance)) throw Error(ErrorCode::InvalidArgument, "distance must be finite");
  if (distance <= rows_.front().distance) {
    return {rows_.front().*column, distance < rows_.front().distance};
  }
  if (distance >= rows_.back().distance) {
    return {rows_.back().*column, distance > rows_.back().distance};
  }
  const auto hi = std::upper_bound(rows_.begin(), rows_.end(), distance,
                                   [](double d, const FovRow& r) { return d < r.distance; });
  const FovRow& b = *hi;
  const FovRow& a = *(hi - 1);
  if (distance == a.distance) return {a.*column, false};
  const double w = (distance - a.distance) / (b.distance - a.distance);
  return {a.*column + w * (b.*column - a.*column), false};
}

Interpolated FovTable::sigma_z(double distance) const { return interpolate(distance, &FovRow::sigma_z); }
Interpolated FovTable::fov_x(double distance) const { return interpolate(distance, &FovRow::fov_x); }
Interpolated FovTable::fov_y(double distance) const { return interpolate(distance, &FovRow::fov_y); }
Interpolated FovTable::pixel_size(double distance) const { return interpolate(distance, &FovRow::pixel_size); }

double FovTable::max_half_tan_x() const {
  double m = 0.0;
  for (const FovRow& r : rows_) m = std::max(m, 0.5 * r.fov_x / r.distance);
  return m;
}

double FovTable::max_half_tan_y() const {
  double m = 0.0;
  for (const FovRow& r : rows_) m = std::max(m, 0.5 * r.fov_y / r.distance);
  return m;
}

bool FovTable::in_image(const Point3& p, double margin) const {
  const double z = p.z();
  if (!(z > 0.0)) return false;
  return std::abs(p.x()) <= 0.5 * fov_x(z).value - margin && std::abs(p.y()) <= 0.5 * fov_y(z).value - margin;
}

bool FovTable::contains(const Point3& p, double margin) const {
  const double z = p.z();
  if (!(z >= near() && z <= far())) return false;
  return std::abs(p.x()) <= 0.5 * fov_x(z).value - margin && std::abs(p.y()) <= 0.5 * fov_y(z).value - margin;
}

void CameraModel::validate() const {
  if (!(frame_rate >= 0.1 && frame_rate <= 120.0)) {
    throw Error(ErrorCode::InvalidArgument, "frame_rate must lie in [0.1, 120]");
  }
  if (!(lateral_sigma_factor >= 0.0) || !std::isfinite(lateral_sigma_factor)) {
    throw Error(ErrorCode::InvalidArgument, "lateral_sigma_factor must be non-negative");
  }
  if (columns < 1 || rows < 1) throw Error(ErrorCode::InvalidArgument, "resolution must be positive");
}

double CameraModel::focal_px() const {
  constexpr double kReference = 400.0;
  const double d = std::clamp(kReference, fov_table.near(), fov_table.far());
  return d / fov_table.pixel_size(d).value;
}

Point2 CameraModel::project(const Point3& p) const {
  const double f = focal_px();
  return {f * p.x() / p.z(), f * p.y() / p.z()};
}

Interpolated sigma_z(const CameraModel& camera, double distance) { return camera.fov_table.sigma_z(distance); }

Vec3 HeightField::normal(double x, double y) const {
  return Vec3(-2.0 * curvature_x * x, -2.0 * curvature_y * y, 1.0).normalized();
}

void TorsoPhantom::validate() const {
  if (!(breathing_amplitude >= 0.0)) throw Error(ErrorCode::InvalidArgument, "breathing amplitude must be >= 0");
  if (!(breathing_period > 0.0)) throw Error(ErrorCode::InvalidArgument, "breathing period must be > 0");
  if (!(base_surface.half_x > 0.0 && base_surface.half_y > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "surface patch must have positive extent");
  }
  for (const BreathHold& h : breath_holds) {
    if (!(h.duration > 0.0)) throw Error(ErrorCode::InvalidArgument, "breath hold duration must be > 0");
  }
}

double breathing_offset(const TorsoPhantom& phantom, double t) {
  if (!(t >= 0.0)) throw Error(ErrorCode::InvalidArgument, "time must be >= 0");
  for (const BreathHold& h : phantom.breath_holds) {
    if (t >= h.start && t < h.start + h.duration) return h.level;
  }
  return phantom.breathing_amplitude *
         std::sin(2.0 * std::numbers::pi * t / phantom.breathing_period + phantom.breathing_phase);
}

void RingMarker::validate() const {
  if (!(inner_diameter > 0.0 && inner_diameter < outer_diameter)) {
    throw Error(ErrorCode::InvalidArgument, "ring needs 0 < inner_diameter < outer_diameter");
  }
  if (!(thickness > 0.0)) throw Error(ErrorCode::InvalidArgument, "ring thickness must be > 0");
}

RingMarker RingMarker::on_surface(const HeightField& surface, double x, double y, double spin_deg) {
  RingMarker m;
  const Eigen::Quaterniond tilt = rotation_from_z(surface.normal(x, y));
  const Eigen::Quaterniond spin(Eigen::AngleAxisd(deg2rad(spin_deg), Vec3::UnitZ()));
  m.pose_on_surface = RigidTransform(tilt * spin, Vec3(x, y, surface.at(x, y)));
  return m;
}

RingTruth marker_truth(const TorsoPhantom& phantom, const RingMarker& marker, double t) {
  const RigidTransform pose = RigidTransform::translation(0.0, 0.0, breathing_offset(phantom, t)) * marker.pose_on_surface;
  return {pose.apply(Vec3(0.0, 0.0, marker.thickness)), pose.rotate(Vec3::UnitZ())};
}

PointCloud transform_cloud(const RigidTransform& t, const PointCloud& cloud) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const Point3& p : cloud.points) out.points.push_back(t.apply(p));
  out.timestamp = cloud.timestamp;
  out.seed = cloud.seed;
  out.sensor_origin = t.apply(cloud.sensor_origin);
  return out;
}

Point3 perturb(const CameraModel& camera, const Point3& p, CounterRng& rng) {
  const double sigma = camera.fov_table.sigma_z(p.z()).value;
  const Vec3 ray = p.normalized();
  const double along = rng.gaussian(sigma) / ray.z();
  const double lateral = camera.lateral_sigma_factor * sigma;
  Point3 q = p + along * ray;
  q.x() += rng.gaussian(lateral);
  q.y() += rng.gaussian(lateral);
  return q;
}

PointCloud render_cloud(const TorsoPhantom& phantom, const std::optional<RingMarker>& marker,
                        const CameraModel& camera, double t, std::uint64_t seed, const SceneExtras& extras) {
  phantom.validate();
  camera.validate();
  if (marker) marker->validate();

  const double offset = breathing_offset(phantom, t);
  const RigidTransform& mount = camera.mount_pose;
  const RigidTransform cam_from_phantom = mount.inverse();
  std::optional<RigidTransform> marker_from_phantom;
  if (marker) {
    marker_from_phantom = (RigidTransform::translation(0.0, 0.0, offset) * marker->pose_on_surface).inverse();
  }
  const double r_in = marker ? 0.5 * marker->inner_diameter : 0.0;
  const double r_out = marker ? 0.5 * marker->outer_diameter : 0.0;

  const FovTable& table = camera.fov_table;
  const double tan_x = table.max_half_tan_x();
  const double tan_y = table.max_half_tan_y();
  const Point3 origin = mount.translation();

  PointCloud cloud;
  cloud.timestamp = t;
  cloud.seed = seed;
  cloud.points.reserve(static_cast<std::size_t>(camera.columns) * static_cast<std::size_t>(camera.rows));

  for (int row = 0; row < camera.rows; ++row) {
    const double v = (2.0 * (row + 0.5) / camera.rows - 1.0) * tan_y;
    for (int col = 0; col < camera.columns; ++col) {
      const double u = (2.0 * (col + 0.5) / camera.columns - 1.0) * tan_x;
      const Vec3 dir_cam = Vec3(u, v, 1.0).normalized();
      const Vec3 dir = mount.rotate(dir_cam);

      double s = hit_surface(phantom.base_surface, offset, origin, dir);
      if (marker_from_phantom) {
        const Point3 o_m = marker_from_phantom->apply(origin);
        const Vec3 d_m = marker_from_phantom->rotate(dir);
        s = std::min(s, hit_annulus(r_in, r_out, marker->thickness, o_m, d_m));
      }
      for (const OrientedBox& box : extras.occluders) {
        if (auto hit = box.intersect(origin, dir, kMinRay, s)) s = std::min(s, *hit);
      }
      if (s == kNoHit) continue;

      Point3 p = cam_from_phantom.apply(origin + s * dir);
      if (!table.contains(p)) continue;
      if (extras.noise_enabled) {
        const std::uint64_t ray_index = static_cast<std::uint64_t>(row) * camera.columns + col;
        CounterRng rng(seed, ray_index);
        p = perturb(camera, p, rng);
        // The working range gates the surface, not its noisy measurement;
        // the measured point must still fall inside the image.
        if (!table.in_image(p)) continue;
      }
      cloud.points.push_back(p);
    }
  }
  if (cloud.points.empty()) throw Error(ErrorCode::EmptyCloud, "no surface inside the camera frustum");
  return cloud;
}

}  // namespace snav
