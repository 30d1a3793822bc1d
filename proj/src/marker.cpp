#include "snav/marker.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <limits>
#include <optional>
#include <tuple>
#include <unordered_map>

#include "snav/rng.hpp"

namespace snav {

namespace {

/// Hash grid over a subset of cloud indices, for radius queries.
class VoxelGrid {
 public:
  VoxelGrid(const std::vector<Point3>& points, std::span<const int> indices, double cell)
      : points_(points), cell_(cell) {
    for (int i : indices) cells_[key(points[i])].push_back(i);
  }

  template <typename Fn>
  void for_each_within(const Point3& p, double radius, Fn&& fn) const {
    const int reach = static_cast<int>(std::ceil(radius / cell_));
    const auto [cx, cy, cz] = coords(p);
    const double r2 = radius * radius;
    for (int dx = -reach; dx <= reach; ++dx) {
      for (int dy = -reach; dy <= reach; ++dy) {
        for (int dz = -reach; dz <= reach; ++dz) {
          const auto it = cells_.find(pack(cx + dx, cy + dy, cz + dz));
          if (it == cells_.end()) continue;
          for (int j : it->second) {
            if ((points_[j] - p).squaredNorm() <= r2) fn(j);
          }
        }
      }
    }
  }

 private:
  std::tuple<std::int64_t, std::int64_t, std::int64_t> coords(const Point3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)), static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
  }
  static std::uint64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
    constexpr std::int64_t kBias = 1 << 20;
    return (static_cast<std::uint64_t>(x + kBias) << 42) ^ (static_cast<std::uint64_t>(y + kBias) << 21) ^
           static_cast<std::uint64_t>(z + kBias);
  }
  std::uint64_t key(const Point3& p) const {
    const auto [x, y, z] = coords(p);
    return pack(x, y, z);
  }

  const std::vector<Point3>& points_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

struct Plane {
  Vec3 normal;  // unit, pointing toward the sensor
  double offset;  // normal . p + offset = signed height
  double height(const Point3& p) const { return normal.dot(p) + offset; }
};

Plane oriented_plane(const Vec3& n, const Point3& on_plane, const Point3& sensor) {
  Plane pl{n.normalized(), 0.0};
  pl.offset = -pl.normal.dot(on_plane);
  if (pl.height(sensor) < 0.0) {
    pl.normal = -pl.normal;
    pl.offset = -pl.offset;
  }
  return pl;
}

std::optional<Plane> pca_plane(const std::vector<Point3>& pts, std::span<const int> idx, const Point3& sensor) {
  if (idx.size() < 3) return std::nullopt;
  Point3 c = Point3::Zero();
  for (int i : idx) c += pts[i];
  c /= static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int i : idx) cov += (pts[i] - c) * (pts[i] - c).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  if (!(es.eigenvalues()(1) > 0.0)) return std::nullopt;
  return oriented_plane(es.eigenvectors().col(0), c, sensor);
}

std::optional<Plane> ransac_plane(const std::vector<Point3>& pts, std::span<const int> idx, const Point3& sensor,
                                  const DetectParams& params, std::uint64_t stream) {
  const std::size_t n = idx.size();
  if (n < 3) return std::nullopt;
  CounterRng rng(params.rng_seed, stream);
  const double thr = params.plane_inlier_threshold;
  std::optional<Plane> best;
  std::size_t best_count = 0;
  int needed = params.ransac_iterations;
  constexpr int kMinIterations = 16;
  for (int k = 0; k < std::min(needed, params.ransac_iterations); ++k) {
    const Point3& a = pts[idx[rng.below(n)]];
    const Point3& b = pts[idx[rng.below(n)]];
    const Point3& c = pts[idx[rng.below(n)]];
    const Vec3 normal = (b - a).cross(c - a);
    if (normal.norm() < 1e-9) continue;
    const Plane cand = oriented_plane(normal, a, sensor);
    std::size_t count = 0;
    for (int i : idx) count += std::abs(cand.height(pts[i])) < thr;
    if (count > best_count) {
      best_count = count;
      best = cand;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double miss = 1.0 - w * w * w;
      const int bound = miss <= 0.0 ? kMinIterations
                                    : static_cast<int>(std::ceil(std::log(1e-3) / std::log(std::max(miss, 1e-12))));
      needed = std::max(kMinIterations, bound);
    }
  }
  if (!best) return std::nullopt;
  // Least-squares polish on the consensus set.
  for (int round = 0; round < 2; ++round) {
    std::vector<int> inliers;
    inliers.reserve(best_count);
    for (int i : idx) {
      if (std::abs(best->height(pts[i])) < thr) inliers.push_back(i);
    }
    auto refined = pca_plane(pts, inliers, sensor);
    if (!refined) break;
    best = refined;
  }
  return best;
}

/// Skin model: a quadric height field over a plane frame, so curved skin
/// within a patch is flattened out before the height band is applied.
struct Surface {
  Point3 origin;
  Vec3 u, v, n;  // n points toward the sensor
  Eigen::Matrix<double, 6, 1> c = Eigen::Matrix<double, 6, 1>::Zero();  // 1, a, b, a^2, ab, b^2

  static Eigen::Matrix<double, 6, 1> basis(double a, double b) {
    Eigen::Matrix<double, 6, 1> f;
    f << 1.0, a, b, a * a, a * b, b * b;
    return f;
  }
  double height(const Point3& p) const {
    const Vec3 d = p - origin;
    return n.dot(d) - basis(u.dot(d), v.dot(d)).dot(c);
  }
};

/// RANSAC plane, then trimmed least-squares quadric refits. Points of the
/// ring stand at least band_min above the skin, so the trim stays below it.
std::optional<Surface> fit_surface(const std::vector<Point3>& pts, std::span<const int> idx, const Point3& sensor,
                                   const DetectParams& params, std::uint64_t stream) {
  const auto plane = ransac_plane(pts, idx, sensor, params, stream);
  if (!plane) return std::nullopt;
  Surface s;
  s.n = plane->normal;
  s.origin = Point3::Zero();
  for (int i : idx) s.origin += pts[i];
  s.origin /= static_cast<double>(idx.size());
  s.origin -= plane->height(s.origin) * s.n;
  s.u = s.n.unitOrthogonal();
  s.v = s.n.cross(s.u);

  const double cap = 0.8 * params.band_min;
  double thr = params.plane_inlier_threshold;
  std::size_t previous = 0;
  for (int round = 0; round < 6; ++round) {
    Eigen::Matrix<double, 6, 6> ata = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> atb = Eigen::Matrix<double, 6, 1>::Zero();
    std::size_t count = 0;
    double ss = 0.0;
    for (int i : idx) {
      const double h = s.height(pts[i]);
      if (std::abs(h) >= thr) continue;
      const Vec3 d = pts[i] - s.origin;
      const auto f = Surface::basis(s.u.dot(d), s.v.dot(d));
      ata += f * f.transpose();
      atb += f * s.n.dot(d);
      ss += h * h;
      ++count;
    }
    if (count < 12) break;
    const Eigen::Matrix<double, 6, 1> c = ata.ldlt().solve(atb);
    if (!c.allFinite()) break;
    s.c = c;
    const double rms = std::sqrt(ss / static_cast<double>(count));
    thr = std::clamp(3.0 * rms, params.plane_inlier_threshold, std::max(cap, params.plane_inlier_threshold));
    if (count == previous) break;
    previous = count;
  }
  return s;
}

/// Union-find clustering of `idx` with linking distance `tol`.
std::vector<std::vector<int>> cluster(const std::vector<Point3>& pts, const std::vector<int>& idx, double tol) {
  std::vector<int> parent(idx.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  std::unordered_map<int, int> slot;
  for (std::size_t k = 0; k < idx.size(); ++k) slot[idx[k]] = static_cast<int>(k);
  VoxelGrid grid(pts, idx, tol);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    grid.for_each_within(pts[idx[k]], tol, [&](int j) {
      const int a = find(static_cast<int>(k));
      const int b = find(slot[j]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    });
  }
  std::unordered_map<int, std::size_t> label;
  std::vector<std::vector<int>> out;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const int r = find(static_cast<int>(k));
    auto [it, inserted] = label.try_emplace(r, out.size());
    if (inserted) out.emplace_back();
    out[it->second].push_back(idx[k]);
  }
  return out;
}

double auto_cluster_tolerance(const std::vector<Point3>& pts) {
  // Median nearest-neighbour spacing over a strided sample.
  std::vector<int> all(pts.size());
  std::iota(all.begin(), all.end(), 0);
  const double probe = 6.0;
  VoxelGrid grid(pts, all, probe);
  const std::size_t stride = std::max<std::size_t>(1, pts.size() / 256);
  std::vector<double> nn;
  for (std::size_t i = 0; i < pts.size(); i += stride) {
    double best = std::numeric_limits<double>::infinity();
    grid.for_each_within(pts[i], probe, [&](int j) {
      if (static_cast<std::size_t>(j) != i) best = std::min(best, (pts[j] - pts[i]).norm());
    });
    if (std::isfinite(best)) nn.push_back(best);
  }
  if (nn.empty()) return 3.0;
  std::nth_element(nn.begin(), nn.begin() + static_cast<std::ptrdiff_t>(nn.size() / 2), nn.end());
  return std::clamp(2.5 * nn[nn.size() / 2], 0.5, 6.0);
}

std::optional<MarkerPose> fit_candidate(const std::vector<Point3>& pts, std::vector<int> members,
                                        const PointCloud& cloud, const DetectParams& params) {
  std::optional<CircleFit> fit;
  for (int round = 0; round < 2; ++round) {
    if (static_cast<int>(members.size()) < std::max(params.min_inliers, 6)) return std::nullopt;
    std::vector<Point3> sel;
    sel.reserve(members.size());
    for (int i : members) sel.push_back(pts[i]);
    try {
      fit = fit_circle_3d(sel);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (round == 1) break;
    // Drop points far off the fitted ring (radially or out of its plane).
    double plane_ss = 0.0;
    for (const Point3& p : sel) plane_ss += std::pow(fit->normal.dot(p - fit->center), 2);
    const double plane_sigma = std::sqrt(plane_ss / static_cast<double>(sel.size()));
    const double radial_cut = 3.0 * std::max(fit->rms, 1e-9);
    const double plane_cut = 3.0 * std::max(plane_sigma, 1e-9);
    std::vector<int> kept;
    for (int i : members) {
      const Vec3 d = pts[i] - fit->center;
      const double h = fit->normal.dot(d);
      const double radial = (d - h * fit->normal).norm() - fit->radius;
      if (std::abs(radial) <= radial_cut && std::abs(h) <= plane_cut) kept.push_back(i);
    }
    if (kept.size() == members.size()) break;
    members = std::move(kept);
  }
  if (std::abs(2.0 * fit->radius - params.expected_fit_diameter()) > params.diameter_tolerance) return std::nullopt;
  // A ring is seen most of the way round; short arcs of skin are not.
  constexpr int kSectors = 12;
  constexpr int kMinSectors = 8;
  const Vec3 e1 = fit->normal.unitOrthogonal();
  const Vec3 e2 = fit->normal.cross(e1);
  std::array<bool, kSectors> seen{};
  for (int i : members) {
    const Vec3 d = pts[i] - fit->center;
    const double a = std::atan2(d.dot(e2), d.dot(e1)) + M_PI;
    seen[std::min(kSectors - 1, static_cast<int>(a / (2.0 * M_PI) * kSectors))] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < kMinSectors) return std::nullopt;
  MarkerPose pose;
  pose.center = fit->center;
  pose.normal = fit->normal;
  if (pose.normal.dot(cloud.sensor_origin - pose.center) < 0.0) pose.normal = -pose.normal;
  pose.radius = fit->radius;
  pose.rms_residual = fit->rms;
  pose.inlier_count = static_cast<int>(members.size());
  pose.timestamp = cloud.timestamp;
  return pose;
}

/// One surface + band + cluster + fit pass over `idx`.
void collect_candidates(const PointCloud& cloud, std::span<const int> idx, const DetectParams& params,
                        double link_tol, std::uint64_t stream, std::vector<MarkerPose>& out) {
  const auto& pts = cloud.points;
  const auto surface = fit_surface(pts, idx, cloud.sensor_origin, params, stream);
  if (!surface) return;
  std::vector<int> band;
  for (int i : idx) {
    const double h = surface->height(pts[i]);
    if (h >= params.band_min && h <= params.band_max) band.push_back(i);
  }
  if (static_cast<int>(band.size()) < params.min_inliers) return;
  for (auto& members : cluster(pts, band, link_tol)) {
    if (auto pose = fit_candidate(pts, std::move(members), cloud, params)) out.push_back(*pose);
  }
}

MarkerPose choose(std::vector<MarkerPose> candidates, const DetectParams& params) {
  if (candidates.empty()) throw Error(ErrorCode::NoMarkerFound, "no cluster passed the ring diameter gate");
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const MarkerPose& a, const MarkerPose& b) { return a.rms_residual < b.rms_residual; });
  // The same ring seen from overlapping patches counts once.
  std::vector<MarkerPose> unique;
  for (const MarkerPose& c : candidates) {
    const bool dup = std::any_of(unique.begin(), unique.end(), [&](const MarkerPose& u) {
      return (u.center - c.center).norm() < 0.5 * params.expected_outer_diameter;
    });
    if (!dup) unique.push_back(c);
  }
  if (unique.size() >= 2 && unique[1].rms_residual <= unique[0].rms_residual * (1.0 + params.ambiguity_ratio)) {
    throw AmbiguousMarkerError(std::move(unique));
  }
  return unique.front();
}

}  // namespace

void DetectParams::validate() const {
  if (!(expected_outer_diameter > 0.0 && expected_inner_diameter > 0.0 &&
        expected_inner_diameter < expected_outer_diameter)) {
    throw Error(ErrorCode::InvalidArgument, "expected diameters must satisfy 0 < inner < outer");
  }
  if (!(diameter_tolerance > 0.0 && plane_inlier_threshold > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "thresholds must be positive");
  }
  if (ransac_iterations < 1) throw Error(ErrorCode::InvalidArgument, "ransac_iterations must be >= 1");
  if (min_inliers < 1) throw Error(ErrorCode::InvalidArgument, "min_inliers must be >= 1");
  if (!(band_min >= 0.0 && band_max > band_min)) throw Error(ErrorCode::InvalidArgument, "band must be non-empty");
  if (!(ambiguity_ratio >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ambiguity_ratio must be >= 0");
}

double DetectParams::expected_fit_diameter() const {
  // Mean distance to the center of points spread uniformly over the annulus.
  const double ro = 0.5 * expected_outer_diameter;
  const double ri = 0.5 * expected_inner_diameter;
  return 2.0 * (2.0 / 3.0) * (ro * ro * ro - ri * ri * ri) / (ro * ro - ri * ri);
}

CircleFit fit_circle_3d(std::span<const Point3> points) {
  const std::size_t n = points.size();
  if (n < 6) throw Error(ErrorCode::TooFewPoints, "circle fit needs at least 6 points");
  Point3 centroid = Point3::Zero();
  for (const Point3& p : points) {
    if (!is_finite(p)) throw Error(ErrorCode::InvalidArgument, "non-finite point");
    centroid += p;
  }
  centroid /= static_cast<double>(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Point3& p : points) cov += (p - centroid) * (p - centroid).transpose();
  cov /= static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Eigen::Vector3d lambda = es.eigenvalues();
  if (!(lambda(2) > 1e-300) || !(lambda(1) > 1e-10 * lambda(2))) {
    throw Error(ErrorCode::DegenerateGeometry, "points are coincident or collinear");
  }
  const Vec3 normal = es.eigenvectors().col(0).normalized();
  const Vec3 u = es.eigenvectors().col(2).normalized();
  const Vec3 v = normal.cross(u);

  Eigen::MatrixX2d q(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = points[i] - centroid;
    q(static_cast<Eigen::Index>(i), 0) = d.dot(u);
    q(static_cast<Eigen::Index>(i), 1) = d.dot(v);
  }

  // Kasa: x^2 + y^2 + D x + E y + F = 0.
  Eigen::MatrixX3d a(n, 3);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    a(i, 0) = q(i, 0);
    a(i, 1) = q(i, 1);
    a(i, 2) = 1.0;
    rhs(i) = -(q(i, 0) * q(i, 0) + q(i, 1) * q(i, 1));
  }
  const Eigen::Vector3d def = a.colPivHouseholderQr().solve(rhs);
  Eigen::Vector3d x(-0.5 * def(0), -0.5 * def(1), 0.0);
  const double r2 = x(0) * x(0) + x(1) * x(1) - def(2);
  if (!(r2 > 0.0) || !std::isfinite(r2)) throw Error(ErrorCode::DegenerateGeometry, "algebraic circle fit failed");
  x(2) = std::sqrt(r2);

  // Gauss-Newton on the geometric residual.
  Eigen::VectorXd e(n);
  Eigen::MatrixX3d jac(n, 3);
  auto evaluate = [&](const Eigen::Vector3d& s) {
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
      const double dx = q(i, 0) - s(0);
      const double dy = q(i, 1) - s(1);
      const double dist = std::hypot(dx, dy);
      e(i) = dist - s(2);
      jac(i, 0) = dist > 0.0 ? -dx / dist : 0.0;
      jac(i, 1) = dist > 0.0 ? -dy / dist : 0.0;
      jac(i, 2) = -1.0;
    }
  };
  for (int it = 0; it < 100; ++it) {
    evaluate(x);
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d step = jtj.ldlt().solve(-jac.transpose() * e);
    if (!step.allFinite()) break;
    x += step;
    if (step.norm() <= 1e-14 * (1.0 + std::abs(x(2)))) break;
  }
  evaluate(x);
  if (!(x(2) > 0.0)) throw Error(ErrorCode::DegenerateGeometry, "geometric circle fit diverged");

  CircleFit out;
  out.center = centroid + x(0) * u + x(1) * v;
  out.normal = normal;
  out.radius = x(2);
  out.rms = std::sqrt(e.squaredNorm() / static_cast<double>(n));
  return out;
}

MarkerPose detect_ring(const PointCloud& cloud, const DetectParams& params) {
  params.validate();
  const auto& pts = cloud.points;
  if (pts.empty()) throw Error(ErrorCode::EmptyCloud, "cloud has no points");
  const double link = params.cluster_tolerance > 0.0 ? params.cluster_tolerance : auto_cluster_tolerance(pts);

  std::vector<int> all(pts.size());
  std::iota(all.begin(), all.end(), 0);

  std::vector<MarkerPose> candidates;
  collect_candidates(cloud, all, params, link, 0, candidates);
  if (!candidates.empty()) return choose(std::move(candidates), params);

  // Local patches: greedy cover with spacing D, patches of radius 2D, so
  // every ring lies wholly inside at least one patch.
  const double spacing = params.expected_outer_diameter;
  const double patch_radius = 2.0 * params.expected_outer_diameter;
  std::vector<int> seeds;
  {
    std::unordered_map<std::uint64_t, std::vector<int>> buckets;
    auto cell_of = [&](const Point3& p, int dx, int dy, int dz) {
      const auto cx = static_cast<std::int64_t>(std::floor(p.x() / spacing)) + dx;
      const auto cy = static_cast<std::int64_t>(std::floor(p.y() / spacing)) + dy;
      const auto cz = static_cast<std::int64_t>(std::floor(p.z() / spacing)) + dz;
      return (static_cast<std::uint64_t>(cx + (1 << 20)) << 42) ^ (static_cast<std::uint64_t>(cy + (1 << 20)) << 21) ^
             static_cast<std::uint64_t>(cz + (1 << 20));
    };
    for (int i : all) {
      bool covered = false;
      for (int dx = -1; dx <= 1 && !covered; ++dx)
        for (int dy = -1; dy <= 1 && !covered; ++dy)
          for (int dz = -1; dz <= 1 && !covered; ++dz) {
            const auto it = buckets.find(cell_of(pts[i], dx, dy, dz));
            if (it == buckets.end()) continue;
            for (int s : it->second) {
              if ((pts[s] - pts[i]).norm() < spacing) {
                covered = true;
                break;
              }
            }
          }
      if (!covered) {
        seeds.push_back(i);
        buckets[cell_of(pts[i], 0, 0, 0)].push_back(i);
      }
    }
  }
  VoxelGrid grid(pts, all, patch_radius);
  std::vector<int> patch;
  for (int seed : seeds) {
    patch.clear();
    grid.for_each_within(pts[seed], patch_radius, [&](int j) { patch.push_back(j); });
    std::sort(patch.begin(), patch.end());
    collect_candidates(cloud, patch, params, link, 1 + static_cast<std::uint64_t>(seed), candidates);
  }
  return choose(std::move(candidates), params);
}

MarkerPose track(const MarkerPose& previous, const PointCloud& cloud, const DetectParams& params) {
  if (!is_finite(previous.center)) throw Error(ErrorCode::InvalidArgument, "previous pose is not finite");
  const double radius = 3.0 * params.expected_outer_diameter;
  PointCloud crop;
  crop.timestamp = cloud.timestamp;
  crop.seed = cloud.seed;
  crop.sensor_origin = cloud.sensor_origin;
  for (const Point3& p : cloud.points) {
    if ((p - previous.center).norm() <= radius) crop.points.push_back(p);
  }
  if (static_cast<int>(crop.points.size()) >= params.min_inliers) {
    try {
      return detect_ring(crop, params);
    } catch (const Error&) {
    }
  }
  return detect_ring(cloud, params);
}

}  // namespace snav
