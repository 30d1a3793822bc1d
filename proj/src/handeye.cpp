#include "snav/handeye.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "snav/error.hpp"

namespace snav {

namespace {

Vec3 log_map(const Eigen::Quaterniond& q) {
  const Eigen::AngleAxisd aa(q);
  return aa.angle() * aa.axis();
}

double frac(double x) { return x - std::floor(x); }

}  // namespace

MotionPair relative_motion(const CalibrationSample& i, const CalibrationSample& j) {
  return {j.flange_in_base.inverse() * i.flange_in_base, j.target_in_camera * i.target_in_camera.inverse()};
}

double axis_separation_deg(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const Vec3 va = a.vec();
  const Vec3 vb = b.vec();
  if (va.norm() < 1e-12 || vb.norm() < 1e-12) return 0.0;
  const double c = std::clamp(std::abs(va.normalized().dot(vb.normalized())), 0.0, 1.0);
  return rad2deg(std::acos(c));
}

HandEyeResult solve_ax_xb(std::span<const CalibrationSample> samples) {
  if (samples.size() < 3) throw Error(ErrorCode::TooFewSamples, "hand-eye calibration needs at least 3 samples");

  std::vector<MotionPair> pairs;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) pairs.push_back(relative_motion(samples[i], samples[j]));
  }

  // Degeneracy: the rotation is only pinned down by two motions whose axes differ.
  constexpr double kMinAngleRad = 1e-4;
  constexpr double kMinAxisSeparationDeg = 5.0;
  std::vector<const MotionPair*> rotating;
  for (const MotionPair& p : pairs) {
    if (Eigen::AngleAxisd(p.a.quaternion()).angle() > kMinAngleRad) rotating.push_back(&p);
  }
  bool spread = false;
  for (std::size_t i = 0; i < rotating.size() && !spread; ++i) {
    for (std::size_t j = i + 1; j < rotating.size() && !spread; ++j) {
      spread = axis_separation_deg(rotating[i]->a.quaternion(), rotating[j]->a.quaternion()) >= kMinAxisSeparationDeg;
    }
  }
  if (!spread) throw Error(ErrorCode::InsufficientMotion, "relative rotation axes are (nearly) parallel");

  // alpha = R_X beta for every pair; R_X is the polar factor of sum beta alpha^T.
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (const MotionPair* p : rotating) m += log_map(p->b.quaternion()) * log_map(p->a.quaternion()).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d rx = svd.matrixV() * d * svd.matrixU().transpose();

  // (R_A - I) t_X = R_X t_B - t_A
  Eigen::MatrixXd lhs(3 * pairs.size(), 3);
  Eigen::VectorXd rhs(3 * pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(3 * k);
    lhs.block<3, 3>(row, 0) = pairs[k].a.rotation_matrix() - Eigen::Matrix3d::Identity();
    rhs.segment<3>(row) = rx * pairs[k].b.translation() - pairs[k].a.translation();
  }
  const Vec3 tx = lhs.colPivHouseholderQr().solve(rhs);

  HandEyeResult result;
  result.camera_in_flange = RigidTransform::from_matrix(rx, tx);
  result.sample_count = static_cast<int>(samples.size());
  result.pair_count = static_cast<int>(pairs.size());
  double rot_ss = 0.0;
  double trans_ss = 0.0;
  for (const MotionPair& p : pairs) {
    const PoseError e = pose_error(p.a * result.camera_in_flange, result.camera_in_flange * p.b);
    rot_ss += e.rotation_deg * e.rotation_deg;
    trans_ss += e.translation_mm * e.translation_mm;
  }
  result.rotation_residual = std::sqrt(rot_ss / static_cast<double>(pairs.size()));
  result.translation_residual = std::sqrt(trans_ss / static_cast<double>(pairs.size()));
  return result;
}

std::vector<Point3> Box3::corners() const {
  std::vector<Point3> out;
  for (int k = 0; k < 8; ++k) {
    out.emplace_back((k & 1) ? max.x() : min.x(), (k & 2) ? max.y() : min.y(), (k & 4) ? max.z() : min.z());
  }
  return out;
}

std::vector<RigidTransform> plan_poses(const Box3& box, int count, double tilt_range_deg, const CameraModel& camera) {
  if (count < 3) throw Error(ErrorCode::TooFewSamples, "plan_poses needs count >= 3");
  if (!(tilt_range_deg > 0.0 && tilt_range_deg <= 60.0)) {
    throw Error(ErrorCode::InvalidArgument, "tilt_range must lie in (0, 60] degrees");
  }
  if (!((box.max - box.min).array() >= 0.0).all()) throw Error(ErrorCode::InvalidArgument, "box min exceeds max");

  const FovTable& table = camera.fov_table;
  const Point3 center = box.center();
  const std::vector<Point3> corners = box.corners();
  const RigidTransform looking_down = RigidTransform::rot_x_deg(180.0);
  constexpr double kStep = 1.0;
  constexpr double kMinAxisSeparationDeg = 10.0;
  constexpr double kMinRelativeAngleDeg = 2.0;
  constexpr int kMaxCandidates = 20000;

  auto orientation = [&](int m) {
    const double phi = deg2rad(137.50776405003785 * m);
    const double theta = deg2rad(tilt_range_deg * (0.3 + 0.7 * frac(0.7548776662466927 * m + 0.5)));
    const double psi = deg2rad(tilt_range_deg * (2.0 * frac(0.5698402909980532 * m + 0.25) - 1.0));
    const RigidTransform tilt = RigidTransform::rotation(Vec3(-std::sin(phi), std::cos(phi), 0.0), theta);
    return tilt * looking_down * RigidTransform::rotation(Vec3::UnitZ(), psi);
  };
  auto fits = [&](const RigidTransform& pose) {
    const RigidTransform inv = pose.inverse();
    return std::all_of(corners.begin(), corners.end(), [&](const Point3& c) { return table.contains(inv.apply(c)); });
  };
  // Feasible standoff closest to the preferred one, or none.
  auto place = [&](const RigidTransform& rot, double preferred) -> std::optional<RigidTransform> {
    const Vec3 back = -rot.rotate(Vec3::UnitZ());
    std::optional<RigidTransform> best;
    double best_gap = std::numeric_limits<double>::infinity();
    for (double d = table.near(); d <= table.far(); d += kStep) {
      const RigidTransform pose(rot.quaternion(), center + d * back);
      if (!fits(pose)) continue;
      const double gap = std::abs(d - preferred);
      if (gap < best_gap) {
        best_gap = gap;
        best = pose;
      }
    }
    return best;
  };

  std::vector<RigidTransform> poses;
  std::vector<Eigen::Quaterniond> axes;  // consecutive relative rotations
  int m = 0;
  bool any_feasible = false;
  while (static_cast<int>(poses.size()) < count) {
    if (!any_feasible && m >= 200) break;
    if (m >= kMaxCandidates) {
      throw Error(ErrorCode::InfeasibleBox, "could not find well-separated poses for the box");
    }
    const std::size_t k = poses.size();
    const double preferred = table.near() + (table.far() - table.near()) * (0.15 + 0.7 * frac(0.6180339887498949 * k));
    const auto pose = place(orientation(m), preferred);
    ++m;
    if (!pose) continue;
    any_feasible = true;
    if (k > 0) {
      const Eigen::Quaterniond rel = poses.back().quaternion().conjugate() * pose->quaternion();
      if (rotation_angle_deg(rel) < kMinRelativeAngleDeg) continue;
      const bool enforce = count <= 12 || m < kMaxCandidates / 2;
      if (enforce && std::any_of(axes.begin(), axes.end(), [&](const Eigen::Quaterniond& q) {
            return axis_separation_deg(q, rel) < kMinAxisSeparationDeg;
          })) {
        continue;
      }
      axes.push_back(rel);
    }
    poses.push_back(*pose);
  }
  if (poses.empty()) throw Error(ErrorCode::InfeasibleBox, "box does not fit the frustum at any standoff");
  return poses;
}

ReprojectionStats reprojection_error(std::span<const Point2> observed, std::span<const Point2> reference) {
  if (observed.size() != reference.size()) {
    throw Error(ErrorCode::LengthMismatch, "observed and reference corner lists differ in length");
  }
  if (observed.size() < 4) throw Error(ErrorCode::LengthMismatch, "reprojection needs at least 4 corners");
  ReprojectionStats s;
  s.per_corner_offsets.reserve(observed.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double off = (observed[i] - reference[i]).norm();
    s.per_corner_offsets.push_back(off);
    sum += off;
    s.max = std::max(s.max, off);
  }
  const double n = static_cast<double>(observed.size());
  s.mean = sum / n;
  double ss = 0.0;
  for (double off : s.per_corner_offsets) ss += (off - s.mean) * (off - s.mean);
  s.std = std::sqrt(ss / n);
  return s;
}

RigidTransform refine_pose_pixels(std::span<const Point3> model, std::span<const Point2> pixels, const CameraModel& camera,
                                  const RigidTransform& initial) {
  if (model.size() != pixels.size()) throw Error(ErrorCode::LengthMismatch, "model and pixel lists differ in length");
  if (model.size() < 4) throw Error(ErrorCode::TooFewPoints, "pose refinement needs at least 4 corners");
  const auto n = static_cast<Eigen::Index>(model.size());
  auto residuals = [&](const RigidTransform& t) {
    Eigen::VectorXd r(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Point3 p = t.apply(model[static_cast<std::size_t>(i)]);
      if (!(p.z() > 0.0)) throw Error(ErrorCode::DegenerateGeometry, "corner behind the camera");
      r.segment<2>(2 * i) = camera.project(p) - pixels[static_cast<std::size_t>(i)];
    }
    return r;
  };
  // Left-multiplied twist: translation(v) * rotation(w) * T.
  auto step = [](const RigidTransform& t, const Eigen::Matrix<double, 6, 1>& d) {
    const Vec3 w = d.head<3>();
    const double a = w.norm();
    const RigidTransform r = a > 0.0 ? RigidTransform::rotation(w / a, a) : RigidTransform{};
    return RigidTransform::translation(d.tail<3>()) * r * t;
  };
  RigidTransform t = initial;
  Eigen::VectorXd r = residuals(t);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  for (int it = 0; it < 50; ++it) {
    Eigen::MatrixXd jac(2 * n, 6);
    for (int k = 0; k < 6; ++k) {
      const double h = k < 3 ? 1e-7 : 1e-5;
      Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
      d(k) = h;
      const Eigen::VectorXd plus = residuals(step(t, d));
      d(k) = -h;
      jac.col(k) = (plus - residuals(step(t, d))) / (2.0 * h);
    }
    const Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 6, 1> g = jac.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 10 && !improved; ++tries) {
      Eigen::Matrix<double, 6, 6> a = jtj;
      a.diagonal() *= 1.0 + lambda;
      const Eigen::Matrix<double, 6, 1> d = a.ldlt().solve(-g);
      if (!d.allFinite()) break;
      const RigidTransform cand = step(t, d);
      const Eigen::VectorXd rc = residuals(cand);
      if (rc.squaredNorm() < cost) {
        const double gain = cost - rc.squaredNorm();
        t = cand;
        r = rc;
        cost = rc.squaredNorm();
        lambda = std::max(lambda * 0.3, 1e-9);
        improved = true;
        if (gain <= 1e-14 * (1.0 + cost)) return t;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  return t;
}

}  // namespace snav
