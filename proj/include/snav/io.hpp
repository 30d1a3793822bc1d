#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "snav/fov.hpp"
#include "snav/fusion.hpp"
#include "snav/handeye.hpp"
#include "snav/marker.hpp"
#include "snav/respiration.hpp"
#include "snav/scene.hpp"

namespace snav {

using json = nlohmann::json;

// JSON documents. Readers fill absent fields with defaults and validate the
// result; malformed values raise ConfigError.
void to_json(json& j, const RigidTransform& t);  // {"q":[w,x,y,z],"t":[x,y,z]}
void from_json(const json& j, RigidTransform& t);
void to_json(json& j, const CameraModel& c);
void from_json(const json& j, CameraModel& c);
void to_json(json& j, const TorsoPhantom& p);
void from_json(const json& j, TorsoPhantom& p);
void to_json(json& j, const RingMarker& m);
void from_json(const json& j, RingMarker& m);
void to_json(json& j, const OrientedBox& b);
void from_json(const json& j, OrientedBox& b);
void to_json(json& j, const DetectParams& p);
void from_json(const json& j, DetectParams& p);
void to_json(json& j, const MarkerPose& p);  // {"center","normal","radius_mm","rms_mm","inliers","t"}
void from_json(const json& j, MarkerPose& p);
void to_json(json& j, const CalibrationSample& s);
void from_json(const json& j, CalibrationSample& s);
void to_json(json& j, const HandEyeResult& r);
void to_json(json& j, const ReprojectionStats& s);
void to_json(json& j, const TcpCorrection& c);
void to_json(json& j, const GateInterval& g);
void to_json(json& j, const AlarmEvent& a);

json vec_json(const Vec3& v);
Vec3 json_vec(const json& j);

json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// ASCII PLY with double x/y/z vertices.
std::string ply_text(const PointCloud& cloud);
PointCloud parse_ply(const std::string& text);
/// Writes `path` and a JSON sidecar (same stem, .json) holding timestamp,
/// seed and sensor origin.
void save_cloud(const std::filesystem::path& path, const PointCloud& cloud);
/// Reads the PLY and, when present, its sidecar.
PointCloud load_cloud(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& ply_path);

/// obs_x,obs_y,obs_z,exec_x,exec_y,exec_z with six decimals.
std::string records_csv(const std::vector<ExecutionRecord>& records);
std::vector<ExecutionRecord> parse_records_csv(const std::string& text);

/// t_s,displacement_mm
std::string signal_csv(const BreathSignal& signal);
BreathSignal parse_signal_csv(const std::string& text);

/// printf-style "%.*f"
std::string fixed(double v, int decimals);

}  // namespace snav
