#include "snav/fusion.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "snav/error.hpp"

namespace snav {

BasePoint marker_in_base(const RigidTransform& hand_eye, const RigidTransform& flange_in_base,
                         const MarkerPose& marker_in_camera) {
  const RigidTransform camera_in_base = flange_in_base * hand_eye;
  return {camera_in_base.apply(marker_in_camera.center), camera_in_base.rotate(marker_in_camera.normal)};
}

TcpCorrection fit_tcp_correction(std::span<const ExecutionRecord> records, CorrectionModel model) {
  if (records.empty()) throw Error(ErrorCode::EmptyRecords, "no execution records to fit");
  const auto n = static_cast<Eigen::Index>(records.size());
  TcpCorrection c;
  c.fit_pair_count = static_cast<int>(records.size());

  if (records.size() < 4) {
    Vec3 sum = Vec3::Zero();
    for (const ExecutionRecord& r : records) sum += r.difference();
    c.offset = sum / static_cast<double>(records.size());
  } else if (model == CorrectionModel::FullAffine) {
    Eigen::MatrixXd a(n, 4);
    Eigen::MatrixXd b(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      a.row(i) << records[i].camera_observed.transpose(), 1.0;
      b.row(i) = records[i].robot_executed.transpose();
    }
    const Eigen::MatrixXd sol = a.colPivHouseholderQr().solve(b);  // 4 x 3
    const Eigen::Matrix3d m = sol.topRows<3>().transpose();
    c.linear = m;
    c.scale = m.diagonal();
    c.offset = sol.row(3).transpose();
  } else {
    for (int k = 0; k < 3; ++k) {
      double mean_o = 0.0;
      double mean_e = 0.0;
      for (const ExecutionRecord& r : records) {
        mean_o += r.camera_observed(k);
        mean_e += r.robot_executed(k);
      }
      mean_o /= static_cast<double>(n);
      mean_e /= static_cast<double>(n);
      double sxx = 0.0;
      double sxy = 0.0;
      for (const ExecutionRecord& r : records) {
        const double dx = r.camera_observed(k) - mean_o;
        sxx += dx * dx;
        sxy += dx * (r.robot_executed(k) - mean_e);
      }
      // An axis the records never vary along only supports an offset.
      const double scale = sxx > 1e-12 ? sxy / sxx : 1.0;
      c.scale(k) = scale;
      c.offset(k) = mean_e - scale * mean_o;
    }
  }

  for (int k = 0; k < 3; ++k) {
    if (!(c.scale(k) >= TcpCorrection::kMinScale && c.scale(k) <= TcpCorrection::kMaxScale)) {
      throw Error(ErrorCode::CorrectionOutOfRange, "fitted TCP scale leaves [0.9, 1.1]");
    }
  }

  double ss = 0.0;
  for (const ExecutionRecord& r : records) ss += (apply_correction(c, r.camera_observed) - r.robot_executed).squaredNorm();
  c.fit_rms = std::sqrt(ss / static_cast<double>(n));
  return c;
}

Point3 apply_correction(const TcpCorrection& c, const Point3& observed) {
  if (c.linear) return *c.linear * observed + c.offset;
  return c.scale.cwiseProduct(observed) + c.offset;
}

}  // namespace snav
