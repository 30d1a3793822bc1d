#include "snav/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>

#include "snav/error.hpp"
#include "snav/fov.hpp"
#include "snav/rng.hpp"

namespace snav {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double frac(double x) { return x - std::floor(x); }

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double max_of(const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }

/// Small random rigid perturbation: axis uniform on the sphere, angle and
/// translation components Gaussian.
RigidTransform jitter(CounterRng& rng, double rot_sigma_deg, double trans_sigma_mm) {
  Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
  if (axis.norm() < 1e-12) axis = Vec3::UnitZ();
  const double angle = deg2rad(rng.gaussian(rot_sigma_deg));
  const Vec3 t(rng.gaussian(trans_sigma_mm), rng.gaussian(trans_sigma_mm), rng.gaussian(trans_sigma_mm));
  return RigidTransform::translation(t) * RigidTransform::rotation(axis, angle);
}

double normal_error_deg(const Vec3& a, const Vec3& b) {
  return rad2deg(std::acos(std::clamp(std::abs(a.normalized().dot(b.normalized())), 0.0, 1.0)));
}

/// Camera placed `standoff` mm from `target` along its optical axis, looking
/// down with a small tilt and yaw.
RigidTransform camera_looking_at(const Point3& target, double standoff, double yaw_deg, double tilt_deg) {
  return RigidTransform::translation(target) * RigidTransform::rot_z_deg(yaw_deg) *
         RigidTransform::rot_x_deg(180.0 + tilt_deg) * RigidTransform::translation(0.0, 0.0, -standoff);
}

struct SiteScene {
  TorsoPhantom phantom;
  RigidTransform phantom_in_base;
  std::optional<RingMarker> marker;
  RingMarker geometry;  // placement even when the scene has no ring
};

SiteScene site_scene(const Scenario& s, const MarkerSite& site) {
  SiteScene out;
  out.phantom = s.phantom;
  out.phantom_in_base = s.phantom_in_base * RigidTransform::translation(0.0, 0.0, site.lift);
  const RingMarker base = s.marker.value_or(RingMarker{});
  out.geometry = RingMarker::on_surface(s.phantom.base_surface, site.x, site.y, site.spin_deg);
  out.geometry.outer_diameter = base.outer_diameter;
  out.geometry.inner_diameter = base.inner_diameter;
  out.geometry.thickness = base.thickness;
  if (s.marker) out.marker = out.geometry;
  return out;
}

CameraModel camera_at(const CameraModel& camera, const RigidTransform& pose_in_phantom) {
  CameraModel c = camera;
  c.mount_pose = pose_in_phantom;
  return c;
}

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const Error& e)
      : std::runtime_error(e.what()), stage_(std::move(stage)), code_(e.code()) {}
  const std::string& stage() const { return stage_; }
  ErrorCode code() const { return code_; }

 private:
  std::string stage_;
  ErrorCode code_;
};

template <typename Fn>
auto stage(const std::string& name, json& timing, Fn&& fn) {
  const auto t0 = Clock::now();
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      timing["stages"][name] = seconds_since(t0);
    } else {
      auto result = fn();
      timing["stages"][name] = seconds_since(t0);
      return result;
    }
  } catch (const Error& e) {
    timing["stages"][name] = seconds_since(t0);
    throw StageError(name, e);
  }
}

std::string model_name(CorrectionModel m) { return m == CorrectionModel::PerAxis ? "per-axis" : "full-affine"; }

CorrectionModel model_from(const std::string& s) {
  if (s == "per-axis") return CorrectionModel::PerAxis;
  if (s == "full-affine") return CorrectionModel::FullAffine;
  throw Error(ErrorCode::ConfigError, "unknown correction model '" + s + "'");
}

Vec3 vec_or(const json& j, const char* key, const Vec3& fallback) {
  return j.contains(key) && !j.at(key).is_null() ? json_vec(j.at(key)) : fallback;
}

}  // namespace

void Scenario::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  try {
    camera.validate();
    phantom.validate();
    if (marker) marker->validate();
    detect.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    fail(e.what());
  }
  if (sites.empty()) fail("at least one marker site is required");
  if (sites.size() != robot_script.size()) fail("robot_script needs one flange pose per marker site");
  if (calibration.pose_count < 3) fail("calibration.pose_count must be >= 3");
  if (calibration.board_columns < 2 || calibration.board_rows < 2) fail("calibration board needs at least 2x2 corners");
  if (!(calibration.board_pitch > 0.0)) fail("calibration.board_pitch must be positive");
  if (!(calibration.robot_rotation_noise_deg >= 0.0 && calibration.robot_translation_noise_mm >= 0.0 &&
        calibration.corner_pixel_sigma >= 0.0)) {
    fail("calibration noise levels must be non-negative");
  }
  if (!(calibration.gate_threshold_px > 0.0)) fail("calibration.gate_threshold_px must be positive");
  if (!(execution.repeatability_mm >= 0.0)) fail("execution.repeatability_mm must be non-negative");
  if (execution.train_count < 1 || execution.train_count >= static_cast<int>(sites.size())) {
    fail("execution.train_count must leave at least one validation site");
  }
  if (!(execution.tcp_scale.array() > 0.0).all()) fail("execution.tcp_scale must be positive");
  if (!(breathing.duration_s > 0.0 && breathing.gate_tolerance_mm > 0.0 && breathing.gate_min_duration_s > 0.0 &&
        breathing.alarm_threshold_mm > 0.0 && breathing.alarm_window_s > 0.0 && breathing.alarm_tail_s >= 0.0)) {
    fail("breathing parameters must be positive");
  }
  if (sweep.trials_per_distance < 0) fail("sweep.trials_per_distance must be >= 0");
  if (throughput.frames < 1 || throughput.columns < 2 || throughput.rows < 2) fail("throughput settings too small");
}

std::vector<RigidTransform> stations_for_sites(const Scenario& s, double standoff) {
  std::vector<RigidTransform> out;
  const RigidTransform x_inv = s.camera.mount_pose.inverse();
  for (std::size_t k = 0; k < s.sites.size(); ++k) {
    const SiteScene scene = site_scene(s, s.sites[k]);
    const Point3 target = scene.phantom_in_base.apply(marker_truth(scene.phantom, scene.geometry, 0.0).center);
    const double yaw = 15.0 * std::sin(1.7 * static_cast<double>(k));
    const double tilt = 6.0 * std::cos(2.3 * static_cast<double>(k));
    out.push_back(camera_looking_at(target, standoff, yaw, tilt) * x_inv);
  }
  return out;
}

Scenario default_scenario() {
  Scenario s;
  s.camera.mount_pose = RigidTransform::translation(42.0, -18.0, 96.0) * RigidTransform::rot_z_deg(8.0) *
                        RigidTransform::rot_x_deg(2.5);
  s.phantom.base_surface.curvature_x = 0.0008;
  s.phantom.base_surface.half_x = 300.0;
  s.phantom.base_surface.half_y = 200.0;
  s.phantom.breathing_amplitude = 5.0;
  s.phantom.breathing_period = 4.0;
  s.phantom.breath_holds = {{10.0, 8.0, 5.0}};
  s.phantom_in_base = RigidTransform::translation(460.0, 0.0, -120.0);
  s.marker = RingMarker{};
  constexpr int kSites = 20;
  for (int k = 0; k < kSites; ++k) {
    const double kd = static_cast<double>(k);
    MarkerSite site;
    site.x = -110.0 + 220.0 * frac(0.6180339887498949 * kd + 0.5);
    site.y = -80.0 + 160.0 * frac(0.7548776662466927 * kd + 0.5);
    site.spin_deg = 360.0 * frac(0.5698402909980532 * kd);
    site.lift = -30.0 + 60.0 * frac(0.4142135623730951 * kd + 0.5);
    s.sites.push_back(site);
  }
  s.robot_script = stations_for_sites(s, 400.0);
  return s;
}

json scenario_to_json(const Scenario& s) {
  json sites = json::array();
  for (const MarkerSite& m : s.sites) sites.push_back({{"x", m.x}, {"y", m.y}, {"spin_deg", m.spin_deg}, {"lift", m.lift}});
  const CalibrationConfig& c = s.calibration;
  const ExecutionConfig& e = s.execution;
  const BreathingConfig& b = s.breathing;
  return json{
      {"name", s.name},
      {"seed", s.seed},
      {"camera", s.camera},
      {"phantom", s.phantom},
      {"phantom_in_base", s.phantom_in_base},
      {"marker", s.marker ? json(*s.marker) : json(nullptr)},
      {"sites", sites},
      {"robot_script", s.robot_script},
      {"detect", s.detect},
      {"noise", {{"scene", s.scene_noise}, {"robot", s.robot_noise}}},
      {"calibration",
       {{"board_box", {{"min", vec_json(c.board_box.min)}, {"max", vec_json(c.board_box.max)}}},
        {"pose_count", c.pose_count},
        {"tilt_range_deg", c.tilt_range_deg},
        {"board_columns", c.board_columns},
        {"board_rows", c.board_rows},
        {"board_pitch", c.board_pitch},
        {"robot_rotation_noise_deg", c.robot_rotation_noise_deg},
        {"robot_translation_noise_mm", c.robot_translation_noise_mm},
        {"corner_pixel_sigma", c.corner_pixel_sigma},
        {"gate_threshold_px", c.gate_threshold_px}}},
      {"execution",
       {{"tcp_offset", vec_json(e.tcp_offset)},
        {"tcp_scale", vec_json(e.tcp_scale)},
        {"repeatability_mm", e.repeatability_mm},
        {"train_count", e.train_count},
        {"model", model_name(e.model)},
        {"error_bound_mm", e.error_bound_mm}}},
      {"breathing",
       {{"enabled", b.enabled},
        {"duration_s", b.duration_s},
        {"gate_tolerance_mm", b.gate_tolerance_mm},
        {"gate_min_duration_s", b.gate_min_duration_s},
        {"alarm_threshold_mm", b.alarm_threshold_mm},
        {"alarm_window_s", b.alarm_window_s},
        {"alarm_tail_s", b.alarm_tail_s}}},
      {"sweep", {{"enabled", s.sweep.enabled}, {"trials_per_distance", s.sweep.trials_per_distance}}},
      {"throughput",
       {{"enabled", s.throughput.enabled},
        {"frames", s.throughput.frames},
        {"columns", s.throughput.columns},
        {"rows", s.throughput.rows}}},
      {"output_dir", s.output_dir},
  };
}

Scenario scenario_from_json(const json& input, const std::filesystem::path& base_dir) {
  if (!input.is_object()) throw Error(ErrorCode::ConfigError, "scenario must be a JSON object");
  json j = input;
  // "<field>_file" entries pull a sub-document from disk.
  for (const char* key : {"camera", "phantom", "marker", "sites", "robot_script", "detect", "phantom_in_base"}) {
    const std::string file_key = std::string(key) + "_file";
    if (!j.contains(file_key)) continue;
    const std::filesystem::path p = base_dir / j.at(file_key).get<std::string>();
    if (!std::filesystem::exists(p)) throw Error(ErrorCode::ConfigError, "referenced file does not exist: " + p.string());
    j[key] = read_json_file(p);
    j.erase(file_key);
  }

  Scenario s = default_scenario();
  try {
    s.name = j.value("name", s.name);
    if (!j.contains("seed")) throw Error(ErrorCode::ConfigError, "scenario needs an explicit seed");
    s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("camera")) s.camera = j.at("camera").get<CameraModel>();
    if (j.contains("phantom")) s.phantom = j.at("phantom").get<TorsoPhantom>();
    if (j.contains("phantom_in_base")) s.phantom_in_base = j.at("phantom_in_base").get<RigidTransform>();
    if (j.contains("marker")) {
      if (j.at("marker").is_null()) {
        s.marker.reset();
      } else {
        s.marker = j.at("marker").get<RingMarker>();
      }
    }
    if (j.contains("sites")) {
      s.sites.clear();
      for (const json& m : j.at("sites")) {
        s.sites.push_back({m.value("x", 0.0), m.value("y", 0.0), m.value("spin_deg", 0.0), m.value("lift", 0.0)});
      }
    }
    if (j.contains("robot_script")) {
      s.robot_script = j.at("robot_script").get<std::vector<RigidTransform>>();
    } else if (j.contains("sites") || j.contains("camera") || j.contains("phantom") || j.contains("phantom_in_base")) {
      s.robot_script = stations_for_sites(s, 400.0);
    }
    if (j.contains("detect")) s.detect = j.at("detect").get<DetectParams>();
    if (j.contains("noise")) {
      s.scene_noise = j.at("noise").value("scene", s.scene_noise);
      s.robot_noise = j.at("noise").value("robot", s.robot_noise);
    }
    if (j.contains("calibration")) {
      const json& c = j.at("calibration");
      CalibrationConfig& d = s.calibration;
      if (c.contains("board_box")) {
        d.board_box.min = vec_or(c.at("board_box"), "min", d.board_box.min);
        d.board_box.max = vec_or(c.at("board_box"), "max", d.board_box.max);
      }
      d.pose_count = c.value("pose_count", d.pose_count);
      d.tilt_range_deg = c.value("tilt_range_deg", d.tilt_range_deg);
      d.board_columns = c.value("board_columns", d.board_columns);
      d.board_rows = c.value("board_rows", d.board_rows);
      d.board_pitch = c.value("board_pitch", d.board_pitch);
      d.robot_rotation_noise_deg = c.value("robot_rotation_noise_deg", d.robot_rotation_noise_deg);
      d.robot_translation_noise_mm = c.value("robot_translation_noise_mm", d.robot_translation_noise_mm);
      d.corner_pixel_sigma = c.value("corner_pixel_sigma", d.corner_pixel_sigma);
      d.gate_threshold_px = c.value("gate_threshold_px", d.gate_threshold_px);
    }
    if (j.contains("execution")) {
      const json& e = j.at("execution");
      ExecutionConfig& d = s.execution;
      d.tcp_offset = vec_or(e, "tcp_offset", d.tcp_offset);
      d.tcp_scale = vec_or(e, "tcp_scale", d.tcp_scale);
      d.repeatability_mm = e.value("repeatability_mm", d.repeatability_mm);
      d.train_count = e.value("train_count", d.train_count);
      d.model = model_from(e.value("model", model_name(d.model)));
      d.error_bound_mm = e.value("error_bound_mm", d.error_bound_mm);
    }
    if (j.contains("breathing")) {
      const json& b = j.at("breathing");
      BreathingConfig& d = s.breathing;
      d.enabled = b.value("enabled", d.enabled);
      d.duration_s = b.value("duration_s", d.duration_s);
      d.gate_tolerance_mm = b.value("gate_tolerance_mm", d.gate_tolerance_mm);
      d.gate_min_duration_s = b.value("gate_min_duration_s", d.gate_min_duration_s);
      d.alarm_threshold_mm = b.value("alarm_threshold_mm", d.alarm_threshold_mm);
      d.alarm_window_s = b.value("alarm_window_s", d.alarm_window_s);
      d.alarm_tail_s = b.value("alarm_tail_s", d.alarm_tail_s);
    }
    if (j.contains("sweep")) {
      s.sweep.enabled = j.at("sweep").value("enabled", s.sweep.enabled);
      s.sweep.trials_per_distance = j.at("sweep").value("trials_per_distance", s.sweep.trials_per_distance);
    }
    if (j.contains("throughput")) {
      const json& t = j.at("throughput");
      s.throughput.enabled = t.value("enabled", s.throughput.enabled);
      s.throughput.frames = t.value("frames", s.throughput.frames);
      s.throughput.columns = t.value("columns", s.throughput.columns);
      s.throughput.rows = t.value("rows", s.throughput.rows);
    }
    s.output_dir = j.value("output_dir", s.output_dir);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::ConfigError, "config file not found: " + path.string());
  json j;
  try {
    j = read_json_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return scenario_from_json(j, path.parent_path());
}

json RunReport::combined() const {
  json out = report;
  if (!timing.is_null()) out["timing"] = timing;
  return out;
}

namespace {


std::vector<Point3> board_corners(const CalibrationConfig& c) {
  std::vector<Point3> out;
  const double w = c.board_pitch * (c.board_columns - 1);
  const double h = c.board_pitch * (c.board_rows - 1);
  for (int r = 0; r < c.board_rows; ++r) {
    for (int k = 0; k < c.board_columns; ++k) out.emplace_back(k * c.board_pitch - 0.5 * w, r * c.board_pitch - 0.5 * h, 0.0);
  }
  return out;
}

CalibrationOutcome calibrate(const Scenario& s, const std::vector<RigidTransform>& camera_poses) {
  const CalibrationConfig& cfg = s.calibration;
  const std::uint64_t stage_seed = derive_seed(s.seed, "calibration");
  const RigidTransform& x_true = s.camera.mount_pose;
  const RigidTransform board_in_base = RigidTransform::translation(cfg.board_box.center());
  const std::vector<Point3> corners = board_corners(cfg);

  std::vector<CalibrationSample> samples;
  std::vector<std::vector<Point2>> observed_px;
  for (std::size_t k = 0; k < camera_poses.size(); ++k) {
    CounterRng rng(stage_seed, k);
    const RigidTransform flange_true = camera_poses[k] * x_true.inverse();
    RigidTransform flange_reported = flange_true;
    if (s.robot_noise) flange_reported = flange_true * jitter(rng, cfg.robot_rotation_noise_deg, cfg.robot_translation_noise_mm);
    const RigidTransform board_in_camera = camera_poses[k].inverse() * board_in_base;
    std::vector<Point3> measured;
    std::vector<Point2> pixels;
    for (const Point3& c : corners) {
      const Point3 p = board_in_camera.apply(c);
      measured.push_back(s.scene_noise ? perturb(s.camera, p, rng) : p);
      Point2 px = s.camera.project(p);
      if (s.scene_noise) px += Point2(rng.gaussian(cfg.corner_pixel_sigma), rng.gaussian(cfg.corner_pixel_sigma));
      pixels.push_back(px);
    }
    // Depth points seed the board pose; the sub-pixel corners refine it.
    const RigidTransform seed = fit_rigid(corners, measured);
    samples.push_back({flange_reported, refine_pose_pixels(corners, pixels, s.camera, seed)});
    observed_px.push_back(std::move(pixels));
  }

  CalibrationOutcome out;
  out.hand_eye = solve_ax_xb(samples);
  const RigidTransform& x = out.hand_eye.camera_in_flange;

  // Board pose in base from every station, then reproject the corners.
  std::vector<Point3> from, to;
  for (const CalibrationSample& smp : samples) {
    const RigidTransform board = smp.flange_in_base * x * smp.target_in_camera;
    for (const Point3& c : corners) {
      from.push_back(c);
      to.push_back(board.apply(c));
    }
  }
  const RigidTransform board_est = fit_rigid(from, to);
  std::vector<Point2> observed, reference;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const RigidTransform to_camera = (samples[k].flange_in_base * x).inverse() * board_est;
    for (std::size_t i = 0; i < corners.size(); ++i) {
      observed.push_back(observed_px[k][i]);
      reference.push_back(s.camera.project(to_camera.apply(corners[i])));
    }
  }
  out.reprojection = reprojection_error(observed, reference);

  out.gate_passed = reprojection_gate(out.reprojection, cfg.gate_threshold_px);
  const PoseError err = pose_error(x, x_true);
  out.section = out.hand_eye;
  out.section["x_error_vs_truth"] = {{"rotation_deg", err.rotation_deg}, {"translation_mm", err.translation_mm}};
  out.section["board_corners"] = corners.size();
  out.section["gate"] = out.reprojection;
  out.section["gate"]["threshold_px"] = cfg.gate_threshold_px;
  out.section["gate"]["verdict"] = out.gate_passed ? "PASSED" : "FAILED-GATE";
  out.samples = std::move(samples);
  return out;
}

struct Detection {
  MarkerPose pose;
  double center_error = 0.0;
  double normal_error = 0.0;
};

Detection detect_and_score(const MarkerPose& pose, const SiteScene& scene, const RigidTransform& camera_in_phantom,
                           double t) {
  Detection d;
  d.pose = pose;
  const RingTruth truth = marker_truth(scene.phantom, scene.geometry, t);
  const RigidTransform to_camera = camera_in_phantom.inverse();
  d.center_error = (pose.center - to_camera.apply(truth.center)).norm();
  d.normal_error = normal_error_deg(pose.normal, to_camera.rotate(truth.normal));
  return d;
}

Point3 physical_reach(const ExecutionConfig& e, const Point3& reference, const Point3& command) {
  // Inverse of the pendant's reading model.
  Point3 p;
  for (int a = 0; a < 3; ++a) {
    p[a] = (command[a] - e.tcp_offset[a] + (e.tcp_scale[a] - 1.0) * reference[a]) / e.tcp_scale[a];
  }
  return p;
}

void execute(const Scenario& s, const HandEyeResult& he, RunReport& run, json& section) {
  const ExecutionConfig& cfg = s.execution;
  const std::uint64_t stage_seed = derive_seed(s.seed, "execution");
  const Point3 reference = s.phantom_in_base.translation();
  std::vector<Point3> truths;
  std::vector<double> center_err, normal_err;
  json per_site = json::array();
  for (std::size_t k = 0; k < s.sites.size(); ++k) {
    CounterRng rng(stage_seed, k);
    const SiteScene scene = site_scene(s, s.sites[k]);
    const RigidTransform& flange_true = s.robot_script[k];
    const RigidTransform camera_in_phantom = scene.phantom_in_base.inverse() * flange_true * s.camera.mount_pose;
    SceneExtras extras;
    extras.noise_enabled = s.scene_noise;
    const PointCloud cloud = render_cloud(scene.phantom, scene.marker, camera_at(s.camera, camera_in_phantom), 0.0,
                                          derive_seed(stage_seed, k), extras);
    if (k == 0) run.first_cloud = cloud;
    const Detection det = detect_and_score(detect_ring(cloud, s.detect), scene, camera_in_phantom, 0.0);
    center_err.push_back(det.center_error);
    normal_err.push_back(det.normal_error);

    RigidTransform flange_reported = flange_true;
    if (s.robot_noise) flange_reported = flange_true * jitter(rng, s.calibration.robot_rotation_noise_deg, s.calibration.robot_translation_noise_mm);
    const BasePoint observed = marker_in_base(he.camera_in_flange, flange_reported, det.pose);
    const Point3 truth = scene.phantom_in_base.apply(marker_truth(scene.phantom, scene.geometry, 0.0).center);
    Point3 pendant = truth + cfg.tcp_offset;
    for (int a = 0; a < 3; ++a) pendant[a] += (cfg.tcp_scale[a] - 1.0) * (truth[a] - reference[a]);
    if (s.robot_noise) pendant += Vec3(rng.gaussian(cfg.repeatability_mm), rng.gaussian(cfg.repeatability_mm), rng.gaussian(cfg.repeatability_mm));
    run.records.push_back({observed.position, pendant});
    truths.push_back(truth);
    per_site.push_back({{"points", cloud.points.size()}, {"detection", det.pose}, {"center_error_mm", det.center_error}});
  }

  const std::size_t n_train = static_cast<std::size_t>(cfg.train_count);
  const std::span<const ExecutionRecord> train(run.records.data(), n_train);
  const TcpCorrection correction = fit_tcp_correction(train, cfg.model);

  const std::uint64_t reach_seed = derive_seed(stage_seed, "reach");
  Vec3 raw_abs = Vec3::Zero();
  Vec3 corrected_abs = Vec3::Zero();
  json table = json::array();
  for (std::size_t k = 0; k < run.records.size(); ++k) {
    const ExecutionRecord& r = run.records[k];
    const Point3 corrected = apply_correction(correction, r.camera_observed);
    const Point3 d = r.difference();
    table.push_back({{"site", k},
                     {"split", k < n_train ? "train" : "validate"},
                     {"obs", vec_json(r.camera_observed)},
                     {"exec", vec_json(r.robot_executed)},
                     {"diff", vec_json(d)},
                     {"diff_mean", d.mean()},
                     {"corrected", vec_json(corrected)}});
    if (k < n_train) continue;
    CounterRng rng(reach_seed, k);
    auto reach = [&](const Point3& command) {
      Point3 p = physical_reach(cfg, reference, command);
      if (s.robot_noise) p += Vec3(rng.gaussian(cfg.repeatability_mm), rng.gaussian(cfg.repeatability_mm), rng.gaussian(cfg.repeatability_mm));
      return p;
    };
    raw_abs += (reach(r.camera_observed) - truths[k]).cwiseAbs();
    corrected_abs += (reach(corrected) - truths[k]).cwiseAbs();
  }
  const double n_val = static_cast<double>(run.records.size() - n_train);
  raw_abs /= n_val;
  corrected_abs /= n_val;

  section["records"] = run.records.size();
  section["train_count"] = n_train;
  section["validation_count"] = run.records.size() - n_train;
  section["correction"] = correction;
  section["correction_model"] = model_name(cfg.model);
  section["table"] = table;
  section["sites"] = per_site;
  section["detection"] = {{"center_error_median_mm", median_of(center_err)},
                          {"center_error_max_mm", max_of(center_err)},
                          {"normal_error_median_deg", median_of(normal_err)}};
  section["end_to_end"] = {{"uncorrected_mean_abs_mm", vec_json(raw_abs)},
                           {"corrected_mean_abs_mm", vec_json(corrected_abs)},
                           {"bound_mm", cfg.error_bound_mm},
                           {"within_bound", corrected_abs.maxCoeff() <= cfg.error_bound_mm}};
}

void breathe(const Scenario& s, RunReport& run, json& section) {
  const BreathingConfig& cfg = s.breathing;
  const std::uint64_t stage_seed = derive_seed(s.seed, "breathing");
  const SiteScene scene = site_scene(s, s.sites.front());
  const RigidTransform camera_in_phantom = scene.phantom_in_base.inverse() * s.robot_script.front() * s.camera.mount_pose;
  const CameraModel camera = camera_at(s.camera, camera_in_phantom);
  SceneExtras extras;
  extras.noise_enabled = s.scene_noise;

  const auto frames = static_cast<std::size_t>(std::floor(cfg.duration_s * s.camera.frame_rate)) + 1;
  std::vector<MarkerPose> poses;
  std::vector<double> truth_disp;
  std::optional<MarkerPose> previous;
  int dropped = 0;
  const RigidTransform to_camera = camera_in_phantom.inverse();
  const RingTruth truth0 = marker_truth(scene.phantom, scene.geometry, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) / s.camera.frame_rate;
    const PointCloud cloud = render_cloud(scene.phantom, scene.marker, camera, t, derive_seed(stage_seed, f), extras);
    try {
      const MarkerPose pose = previous ? track(*previous, cloud, s.detect) : detect_ring(cloud, s.detect);
      previous = pose;
      poses.push_back(pose);
      const RingTruth truth = marker_truth(scene.phantom, scene.geometry, t);
      truth_disp.push_back((to_camera.apply(truth.center) - to_camera.apply(truth0.center)).dot(poses.front().normal));
    } catch (const Error& e) {
      if (poses.empty()) throw;  // nothing to track
      ++dropped;
    }
  }
  run.signal = extract_signal(poses, poses.front().normal);
  double ss = 0.0;
  for (std::size_t i = 0; i < poses.size(); ++i) ss += std::pow(run.signal.samples[i].displacement - truth_disp[i], 2);

  const std::vector<GateInterval> gates = detect_breath_hold(run.signal, cfg.gate_tolerance_mm, cfg.gate_min_duration_s);
  // Free breathing before the first hold carries the period.
  BreathSignal free;
  for (const BreathSample& b : run.signal.samples) {
    if (gates.empty() || b.t < gates.front().start) free.samples.push_back(b);
  }
  if (free.samples.size() < 16) free = run.signal;
  json period = nullptr;
  try {
    const double p = estimate_period(free);
    period = {{"estimate_s", p}, {"error_pct", 100.0 * std::abs(p - s.phantom.breathing_period) / s.phantom.breathing_period}};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoPeriodicity) throw;
    period = {{"error", std::string(to_string(e.code()))}};
  }

  json alarms = json::array();
  for (const GateInterval& g : gates) {
    BreathSignal watch;
    for (const BreathSample& b : run.signal.samples) {
      if (b.t >= g.start && b.t <= g.end + cfg.alarm_tail_s) watch.samples.push_back(b);
    }
    if (watch.samples.size() < 2) continue;
    for (const AlarmEvent& a : motion_alarm(watch, cfg.alarm_threshold_mm, cfg.alarm_window_s)) alarms.push_back(a);
  }

  section["frames"] = frames;
  section["detected"] = poses.size();
  section["dropped"] = dropped;
  section["displacement_rms_error_mm"] = std::sqrt(ss / static_cast<double>(poses.size()));
  section["period"] = period;
  section["gates"] = gates;
  section["alarms"] = alarms;
}

void sweep(const Scenario& s, json& rows) {
  const std::uint64_t stage_seed = derive_seed(s.seed, "sweep");
  const FovTable& table = s.camera.fov_table;
  TorsoPhantom flat;
  flat.base_surface.half_x = 0.75 * table.rows().back().fov_x;
  flat.base_surface.half_y = 0.75 * table.rows().back().fov_y;
  SceneExtras extras;
  extras.noise_enabled = s.scene_noise;
  const RingMarker base = s.marker.value_or(RingMarker{});
  rows = json::array();
  for (std::size_t i = 0; i < table.rows().size(); ++i) {
    const FovRow& row = table.rows()[i];
    const std::uint64_t knot_seed = derive_seed(stage_seed, i);
    const CameraModel cam = camera_at(s.camera, RigidTransform::translation(0.0, 0.0, row.distance) * RigidTransform::rot_x_deg(180.0));
    const PointCloud plane = render_cloud(flat, std::nullopt, cam, 0.0, derive_seed(knot_seed, "plane"), extras);
    double mean = 0.0;
    for (const Point3& p : plane.points) mean += p.z();
    mean /= static_cast<double>(plane.points.size());
    double var = 0.0;
    for (const Point3& p : plane.points) var += (p.z() - mean) * (p.z() - mean);
    const double z_std = std::sqrt(var / static_cast<double>(plane.points.size()));

    std::vector<double> center_err, normal_err;
    int misses = 0;
    if (s.marker) {
      // Ring top face at the knot distance, unless that pushes the skin
      // beyond the far limit.
      const double skin = std::clamp(row.distance + base.thickness, table.near() + base.thickness, table.far());
      const CameraModel ring_cam =
          camera_at(s.camera, RigidTransform::translation(0.0, 0.0, skin) * RigidTransform::rot_x_deg(180.0));
      for (int trial = 0; trial < s.sweep.trials_per_distance; ++trial) {
        CounterRng rng(knot_seed, static_cast<std::uint64_t>(trial));
        RingMarker m = RingMarker::on_surface(flat.base_surface, 40.0 * (rng.uniform() - 0.5), 40.0 * (rng.uniform() - 0.5),
                                              360.0 * rng.uniform());
        m.outer_diameter = base.outer_diameter;
        m.inner_diameter = base.inner_diameter;
        m.thickness = base.thickness;
        const PointCloud cloud =
            render_cloud(flat, m, ring_cam, 0.0, derive_seed(knot_seed, static_cast<std::uint64_t>(trial)), extras);
        try {
          SiteScene scene;
          scene.phantom = flat;
          scene.geometry = m;
          const Detection d = detect_and_score(detect_ring(cloud, s.detect), scene, ring_cam.mount_pose, 0.0);
          center_err.push_back(d.center_error);
          normal_err.push_back(d.normal_error);
        } catch (const Error&) {
          ++misses;
        }
      }
    }
    rows.push_back({{"distance_mm", row.distance},
                    {"sigma_z_table_mm", row.sigma_z},
                    {"z_std_measured_mm", z_std},
                    {"fov_x_mm", row.fov_x},
                    {"fov_y_mm", row.fov_y},
                    {"pixel_size_mm", row.pixel_size},
                    {"plane_points", plane.points.size()},
                    {"ring_trials", s.marker ? s.sweep.trials_per_distance : 0},
                    {"ring_detected", center_err.size()},
                    {"ring_missed", misses},
                    {"center_error_median_mm", center_err.empty() ? json(nullptr) : json(median_of(center_err))},
                    {"normal_error_median_deg", normal_err.empty() ? json(nullptr) : json(median_of(normal_err))}});
  }
}

void throughput(const Scenario& s, const HandEyeResult& he, json& section, json& timing) {
  const std::uint64_t stage_seed = derive_seed(s.seed, "throughput");
  const SiteScene scene = site_scene(s, s.sites.front());
  const RigidTransform camera_in_phantom = scene.phantom_in_base.inverse() * s.robot_script.front() * s.camera.mount_pose;
  CameraModel camera = camera_at(s.camera, camera_in_phantom);
  camera.columns = s.throughput.columns;
  camera.rows = s.throughput.rows;
  SceneExtras extras;
  extras.noise_enabled = s.scene_noise;
  double busy = 0.0;
  std::size_t points = 0;
  int detected = 0;
  for (int f = 0; f < s.throughput.frames; ++f) {
    const double t = f / s.camera.frame_rate;
    const PointCloud cloud =
        render_cloud(scene.phantom, scene.marker, camera, t, derive_seed(stage_seed, static_cast<std::uint64_t>(f)), extras);
    points += cloud.points.size();
    const auto t0 = Clock::now();
    try {
      const MarkerPose pose = detect_ring(cloud, s.detect);
      const BasePoint p = marker_in_base(he.camera_in_flange, s.robot_script.front(), pose);
      detected += is_finite(p.position) ? 1 : 0;
    } catch (const Error&) {
    }
    busy += seconds_since(t0);
  }
  const double per_frame = busy / s.throughput.frames;
  section = {{"frames", s.throughput.frames},
             {"points_per_frame", static_cast<double>(points) / s.throughput.frames},
             {"detected", detected},
             {"resolution", {s.throughput.columns, s.throughput.rows}}};
  timing["throughput"] = {{"detect_fuse_ms_per_frame", 1e3 * per_frame},
                          {"fps", per_frame > 0.0 ? 1.0 / per_frame : 0.0},
                          {"target_fps", 7.0},
                          {"meets_target", per_frame > 0.0 && 1.0 / per_frame >= 7.0},
                          {"points_per_frame", static_cast<double>(points) / s.throughput.frames}};
}

}  // namespace

CalibrationOutcome simulate_calibration(const Scenario& s) {
  s.validate();
  const auto poses = plan_poses(s.calibration.board_box, s.calibration.pose_count, s.calibration.tilt_range_deg, s.camera);
  return calibrate(s, poses);
}

json simulate_breathing(const Scenario& s, BreathSignal& signal) {
  s.validate();
  RunReport run;
  json section;
  breathe(s, run, section);
  signal = std::move(run.signal);
  return section;
}

PointCloud simulate_site_cloud(const Scenario& s, std::size_t site, double t) {
  s.validate();
  if (site >= s.sites.size()) throw Error(ErrorCode::InvalidArgument, "site index out of range");
  const SiteScene scene = site_scene(s, s.sites[site]);
  const RigidTransform camera_in_phantom = scene.phantom_in_base.inverse() * s.robot_script[site] * s.camera.mount_pose;
  SceneExtras extras;
  extras.noise_enabled = s.scene_noise;
  return render_cloud(scene.phantom, scene.marker, camera_at(s.camera, camera_in_phantom), t,
                      derive_seed(derive_seed(s.seed, "simulate"), site), extras);
}

RunReport run_scenario(const Scenario& scenario) {
  scenario.validate();
  RunReport run;
  json& r = run.report;
  r["software_version"] = kSoftwareVersion;
  r["scenario"] = scenario.name;
  r["config"] = scenario_to_json(scenario);
  r["stages"] = json::object();
  json& stages = r["stages"];
  run.timing = {{"stages", json::object()}};
  const auto t_total = Clock::now();

  try {
    const auto poses = stage("plan", run.timing, [&] {
      return plan_poses(scenario.calibration.board_box, scenario.calibration.pose_count,
                        scenario.calibration.tilt_range_deg, scenario.camera);
    });
    stages["plan"] = {{"poses", poses.size()}};

    const CalibrationOutcome cal = stage("calibration", run.timing, [&] { return calibrate(scenario, poses); });
    stages["calibration"] = cal.section;
    stages["gate"] = cal.section.at("gate");
    stages["calibration"].erase("gate");
    if (!cal.gate_passed) {
      r["status"] = "FAILED-GATE";
      run.exit_code = kExitGate;
      run.timing["total_s"] = seconds_since(t_total);
      return run;
    }

    json exec;
    stage("execution", run.timing, [&] { execute(scenario, cal.hand_eye, run, exec); });
    stages["execution"] = exec;

    if (scenario.breathing.enabled) {
      json b;
      stage("breathing", run.timing, [&] { breathe(scenario, run, b); });
      stages["breathing"] = b;
    }
    if (scenario.sweep.enabled) {
      json rows;
      stage("sweep", run.timing, [&] { sweep(scenario, rows); });
      stages["accuracy_vs_distance"] = rows;
    }
    if (scenario.throughput.enabled) {
      json t;
      stage("throughput", run.timing, [&] { throughput(scenario, cal.hand_eye, t, run.timing); });
      stages["throughput"] = t;
    }
    r["status"] = "ok";
  } catch (const StageError& e) {
    r["status"] = "stage-error";
    r["error"] = {{"stage", e.stage()}, {"code", std::string(to_string(e.code()))}, {"message", e.what()}};
    run.exit_code = kExitStage;
  }
  run.timing["total_s"] = seconds_since(t_total);
  return run;
}

void write_report(const RunReport& run, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "report.json", run.report.dump(2) + "\n");
  write_text_file(out_dir / "timing.json", run.timing.dump(2) + "\n");
  if (!run.records.empty()) write_text_file(out_dir / "execution_records.csv", records_csv(run.records));
  if (!run.signal.samples.empty()) write_text_file(out_dir / "signal.csv", signal_csv(run.signal));
  if (run.first_cloud) save_cloud(out_dir / "cloud_000.ply", *run.first_cloud);
  const json all = run.combined();
  for (const char* id : {"accuracy-vs-distance", "execution-error", "timing"}) {
    try {
      write_text_file(out_dir / (std::string(id) + ".csv"), emit_table(all, id));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingSection) throw;
    }
  }
}

std::string emit_table(const json& report, const std::string& table_id) {
  auto missing = [&]() -> Error { return Error(ErrorCode::MissingSection, "report has no '" + table_id + "' section"); };
  const json* stages = report.is_object() && report.contains("stages") ? &report.at("stages") : nullptr;
  auto num = [](const json& v, int decimals) { return v.is_null() ? std::string() : fixed(v.get<double>(), decimals); };

  if (table_id == "accuracy-vs-distance") {
    if (!stages || !stages->contains("accuracy_vs_distance")) throw missing();
    std::string out =
        "distance_mm,sigma_z_table_mm,z_std_measured_mm,fov_x_mm,fov_y_mm,pixel_size_mm,ring_trials,ring_detected,"
        "center_error_median_mm,normal_error_median_deg\n";
    for (const json& row : stages->at("accuracy_vs_distance")) {
      out += num(row.at("distance_mm"), 0) + "," + num(row.at("sigma_z_table_mm"), 3) + "," +
             num(row.at("z_std_measured_mm"), 4) + "," + num(row.at("fov_x_mm"), 2) + "," + num(row.at("fov_y_mm"), 2) +
             "," + num(row.at("pixel_size_mm"), 3) + "," + std::to_string(row.at("ring_trials").get<int>()) + "," +
             std::to_string(row.at("ring_detected").get<int>()) + "," + num(row.at("center_error_median_mm"), 4) + "," +
             num(row.at("normal_error_median_deg"), 4) + "\n";
    }
    return out;
  }
  if (table_id == "execution-error") {
    if (!stages || !stages->contains("execution")) throw missing();
    std::string out = "site,split,obs_x,obs_y,obs_z,exec_x,exec_y,exec_z,diff_x,diff_y,diff_z,diff_mean\n";
    for (const json& row : stages->at("execution").at("table")) {
      out += std::to_string(row.at("site").get<int>()) + "," + row.at("split").get<std::string>();
      for (const char* key : {"obs", "exec", "diff"}) {
        for (const json& v : row.at(key)) out += "," + fixed(v.get<double>(), 6);
      }
      out += "," + fixed(row.at("diff_mean").get<double>(), 6) + "\n";
    }
    return out;
  }
  if (table_id == "timing") {
    if (!report.is_object() || !report.contains("timing") || !report.at("timing").contains("stages")) throw missing();
    const json& t = report.at("timing");
    std::string out = "stage,seconds\n";
    for (const auto& [name, secs] : t.at("stages").items()) out += name + "," + fixed(secs.get<double>(), 6) + "\n";
    if (t.contains("total_s")) out += "total," + fixed(t.at("total_s").get<double>(), 6) + "\n";
    if (t.contains("throughput")) {
      const json& th = t.at("throughput");
      out += "detect_fuse_ms_per_frame," + fixed(th.at("detect_fuse_ms_per_frame").get<double>(), 3) + "\n";
      out += "detect_fuse_fps," + fixed(th.at("fps").get<double>(), 2) + "\n";
      out += "points_per_frame," + fixed(th.at("points_per_frame").get<double>(), 0) + "\n";
    }
    return out;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown table id '" + table_id + "'");
}

}  // namespace snav
