#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "snav/error.hpp"
#include "snav/geometry.hpp"
#include "snav/scene.hpp"

namespace snav {

/// Observed ring pose. Only five degrees of freedom are observable: the
/// annulus is symmetric about its normal, so in-plane spin is not reported.
struct MarkerPose {
  Point3 center = Point3::Zero();
  Vec3 normal = Vec3::UnitZ();  ///< points toward the sensor
  double radius = 0.0;  ///< fitted mean ring radius
  double rms_residual = 0.0;
  int inlier_count = 0;
  double timestamp = 0.0;
};

struct DetectParams {
  double expected_outer_diameter = 24.0;
  /// With the outer diameter this fixes the diameter a mean-radius fit of a
  /// filled annulus should return.
  double expected_inner_diameter = 16.0;
  double diameter_tolerance = 2.0;
  int ransac_iterations = 200;
  double plane_inlier_threshold = 0.5;
  int min_inliers = 12;
  std::uint64_t rng_seed = 1;
  /// Height band above the skin plane that keeps marker candidates.
  double band_min = 1.0;
  double band_max = 4.0;
  /// Linking distance for candidate clustering; <= 0 picks it from the data.
  double cluster_tolerance = 0.0;
  /// Two gated candidates whose rms differ by less than this fraction are ambiguous.
  double ambiguity_ratio = 0.10;

  void validate() const;
  /// Diameter the ring fit is gated against.
  double expected_fit_diameter() const;
};

struct CircleFit {
  Point3 center;
  Vec3 normal;
  double radius = 0.0;
  double rms = 0.0;  ///< in-plane geometric residual
};

/// Plane by PCA, Kasa algebraic circle in that plane, then Gauss-Newton on
/// sum (|p_i - c| - r)^2. Throws TooFewPoints (< 6) or DegenerateGeometry.
CircleFit fit_circle_3d(std::span<const Point3> points);

class AmbiguousMarkerError : public Error {
 public:
  AmbiguousMarkerError(std::vector<MarkerPose> candidates)
      : Error(ErrorCode::AmbiguousMarker, "more than one ring candidate with similar residual"),
        candidates_(std::move(candidates)) {}
  const std::vector<MarkerPose>& candidates() const { return candidates_; }

 private:
  std::vector<MarkerPose> candidates_;
};

/// Plane RANSAC, band-pass above the plane, clustering, per-cluster circle
/// fit and diameter gate. When no candidate survives against a single global
/// plane (curved skin), the same steps run on overlapping local patches.
/// Throws NoMarkerFound, AmbiguousMarkerError, or EmptyCloud.
MarkerPose detect_ring(const PointCloud& cloud, const DetectParams& params);

/// detect_ring restricted to a sphere of 3 x expected_outer_diameter around
/// the previous center, with a full-cloud fallback.
MarkerPose track(const MarkerPose& previous, const PointCloud& cloud, const DetectParams& params);

}  // namespace snav
