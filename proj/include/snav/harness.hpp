#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "snav/fusion.hpp"
#include "snav/handeye.hpp"
#include "snav/io.hpp"
#include "snav/marker.hpp"
#include "snav/respiration.hpp"
#include "snav/scene.hpp"

namespace snav {

inline constexpr const char* kSoftwareVersion = "0.1.0";

/// Marker placement on the phantom surface for one execution site. `lift`
/// raises the whole phantom along base z, as when the couch is moved.
struct MarkerSite {
  double x = 0.0;
  double y = 0.0;
  double spin_deg = 0.0;
  double lift = 0.0;
};

struct CalibrationConfig {
  Box3 board_box{Point3(380.0, -80.0, -10.0), Point3(540.0, 80.0, 10.0)};  ///< base frame
  int pose_count = 10;
  double tilt_range_deg = 25.0;
  int board_columns = 8;
  int board_rows = 6;
  double board_pitch = 20.0;
  double robot_rotation_noise_deg = 0.01;
  double robot_translation_noise_mm = 0.02;
  /// Sub-pixel corner localisation noise of the 2-D image.
  double corner_pixel_sigma = 0.1;
  double gate_threshold_px = kReprojectionGatePx;
};

struct ExecutionConfig {
  /// Pendant reading = truth + offset + (scale - 1) * (truth - reference) + N(0, repeatability).
  Vec3 tcp_offset = Vec3(-0.56, -0.02, -0.44);
  Vec3 tcp_scale = Vec3(1.0004, 0.9997, 1.0005);
  double repeatability_mm = 0.03;
  int train_count = 12;
  CorrectionModel model = CorrectionModel::PerAxis;
  double error_bound_mm = 0.563;
};

struct BreathingConfig {
  bool enabled = true;
  double duration_s = 24.0;
  double gate_tolerance_mm = 0.5;
  double gate_min_duration_s = 3.0;
  double alarm_threshold_mm = 2.0;
  double alarm_window_s = 2.0;
  /// Alarms are watched from a gate's start until this long after it ends.
  double alarm_tail_s = 2.0;
};

struct SweepConfig {
  bool enabled = true;
  int trials_per_distance = 5;
};

struct ThroughputConfig {
  bool enabled = true;
  int frames = 20;
  int columns = 180;  ///< about 20 000 points on the default phantom
  int rows = 116;
};

struct Scenario {
  std::string name = "default";
  std::uint64_t seed = 20240601;
  CameraModel camera;  ///< mount_pose is the true camera-in-flange transform
  TorsoPhantom phantom;
  RigidTransform phantom_in_base;
  std::optional<RingMarker> marker;  ///< ring geometry; absent means no ring in the scene
  std::vector<MarkerSite> sites;
  std::vector<RigidTransform> robot_script;  ///< flange pose observing each site
  DetectParams detect;
  bool scene_noise = true;
  bool robot_noise = true;
  CalibrationConfig calibration;
  ExecutionConfig execution;
  BreathingConfig breathing;
  SweepConfig sweep;
  ThroughputConfig throughput;
  std::string output_dir;

  /// Throws ConfigError.
  void validate() const;
};

Scenario default_scenario();

/// Flange poses placing the camera `standoff` mm above each site.
std::vector<RigidTransform> stations_for_sites(const Scenario& s, double standoff);

json scenario_to_json(const Scenario& s);
/// Missing fields take the default scenario's values. Fields ending in
/// "_file" name JSON files (relative to `base_dir`) that replace the
/// matching field; they must exist at load time.
Scenario scenario_from_json(const json& j, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

enum ExitCode : int { kExitOk = 0, kExitGate = 2, kExitConfig = 3, kExitStage = 4 };

struct RunReport {
  json report;  ///< deterministic: a function of the config alone
  json timing;  ///< wall-clock seconds per stage and throughput
  int exit_code = kExitOk;
  std::vector<ExecutionRecord> records;
  BreathSignal signal;
  std::optional<PointCloud> first_cloud;

  /// report with timing merged in under "timing".
  json combined() const;
};

RunReport run_scenario(const Scenario& scenario);

struct CalibrationOutcome {
  std::vector<CalibrationSample> samples;
  HandEyeResult hand_eye;
  ReprojectionStats reprojection;
  bool gate_passed = false;
  json section;  ///< report fragment: X, residuals, solver, error vs truth, gate
};

/// Planned stations, simulated board observations and the AX = XB solve.
CalibrationOutcome simulate_calibration(const Scenario& scenario);

/// Breathing frames over site 0; returns the report fragment.
json simulate_breathing(const Scenario& scenario, BreathSignal& signal);

/// Camera-frame cloud of one execution site at time t.
PointCloud simulate_site_cloud(const Scenario& scenario, std::size_t site, double t);

/// Writes report.json, timing.json, execution_records.csv, signal.csv,
/// cloud_000.ply (+ sidecar) and the table CSVs that have data.
void write_report(const RunReport& run, const std::filesystem::path& out_dir);

/// table_id: accuracy-vs-distance | execution-error | timing. Throws
/// MissingSection when the report lacks it, InvalidArgument for other ids.
std::string emit_table(const json& report, const std::string& table_id);

}  // namespace snav
