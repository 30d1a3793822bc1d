#include "snav/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "snav/error.hpp"

namespace snav {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

template <typename T>
T field(const json& j, const char* key, const T& fallback) {
  if (!j.is_object()) config_error("expected a JSON object");
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    config_error(std::string("field '") + key + "': " + e.what());
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() && s.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::IoError, "not a number: '" + s + "'");
  }
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) config_error("expected a 3-vector");
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  } catch (const json::exception& e) {
    config_error(e.what());
  }
}

void to_json(json& j, const RigidTransform& t) {
  const Eigen::Quaterniond& q = t.quaternion();
  j = json{{"q", {q.w(), q.x(), q.y(), q.z()}}, {"t", vec_json(t.translation())}};
}

void from_json(const json& j, RigidTransform& t) {
  const auto q = field<std::vector<double>>(j, "q", {1.0, 0.0, 0.0, 0.0});
  if (q.size() != 4) config_error("'q' must hold four numbers");
  const Vec3 tr = j.contains("t") ? json_vec(j.at("t")) : Vec3::Zero();
  try {
    t = RigidTransform(Eigen::Quaterniond(q[0], q[1], q[2], q[3]), tr);
  } catch (const Error& e) {
    config_error(e.what());
  }
}

void to_json(json& j, const CameraModel& c) {
  json rows = json::array();
  for (const FovRow& r : c.fov_table.rows()) {
    rows.push_back({{"distance", r.distance},
                    {"fov_x", r.fov_x},
                    {"fov_y", r.fov_y},
                    {"sigma_z", r.sigma_z},
                    {"optical_blur", r.optical_blur},
                    {"pixel_size", r.pixel_size}});
  }
  j = json{{"fov_table", rows},
           {"mount_pose", c.mount_pose},
           {"lateral_sigma_factor", c.lateral_sigma_factor},
           {"frame_rate", c.frame_rate},
           {"resolution", {c.columns, c.rows}}};
}

void from_json(const json& j, CameraModel& c) {
  CameraModel out;
  if (j.contains("fov_table")) {
    std::vector<FovRow> rows;
    for (const json& r : j.at("fov_table")) {
      FovRow row;
      row.distance = field(r, "distance", 0.0);
      row.fov_x = field(r, "fov_x", 0.0);
      row.fov_y = field(r, "fov_y", 0.0);
      row.sigma_z = field(r, "sigma_z", 0.0);
      row.optical_blur = field(r, "optical_blur", 0.0);
      row.pixel_size = field(r, "pixel_size", 0.0);
      rows.push_back(row);
    }
    try {
      out.fov_table = FovTable(std::move(rows));
    } catch (const Error& e) {
      config_error(e.what());
    }
  }
  out.mount_pose = field(j, "mount_pose", out.mount_pose);
  out.lateral_sigma_factor = field(j, "lateral_sigma_factor", out.lateral_sigma_factor);
  out.frame_rate = field(j, "frame_rate", out.frame_rate);
  const auto res = field<std::vector<int>>(j, "resolution", {out.columns, out.rows});
  if (res.size() != 2) config_error("'resolution' must be [columns, rows]");
  out.columns = res[0];
  out.rows = res[1];
  try {
    out.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  c = std::move(out);
}

void to_json(json& j, const TorsoPhantom& p) {
  json holds = json::array();
  for (const BreathHold& h : p.breath_holds) holds.push_back({{"start", h.start}, {"duration", h.duration}, {"level", h.level}});
  const HeightField& s = p.base_surface;
  j = json{{"base_surface",
            {{"height", s.height},
             {"curvature_x", s.curvature_x},
             {"curvature_y", s.curvature_y},
             {"half_x", s.half_x},
             {"half_y", s.half_y}}},
           {"breathing_amplitude", p.breathing_amplitude},
           {"breathing_period", p.breathing_period},
           {"breathing_phase", p.breathing_phase},
           {"breath_holds", holds}};
}

void from_json(const json& j, TorsoPhantom& p) {
  TorsoPhantom out;
  if (j.contains("base_surface")) {
    const json& s = j.at("base_surface");
    HeightField& h = out.base_surface;
    h.height = field(s, "height", h.height);
    h.curvature_x = field(s, "curvature_x", h.curvature_x);
    h.curvature_y = field(s, "curvature_y", h.curvature_y);
    h.half_x = field(s, "half_x", h.half_x);
    h.half_y = field(s, "half_y", h.half_y);
  }
  out.breathing_amplitude = field(j, "breathing_amplitude", out.breathing_amplitude);
  out.breathing_period = field(j, "breathing_period", out.breathing_period);
  out.breathing_phase = field(j, "breathing_phase", out.breathing_phase);
  if (j.contains("breath_holds")) {
    for (const json& h : j.at("breath_holds")) {
      out.breath_holds.push_back({field(h, "start", 0.0), field(h, "duration", 0.0), field(h, "level", 0.0)});
    }
  }
  try {
    out.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  p = std::move(out);
}

void to_json(json& j, const RingMarker& m) {
  j = json{{"outer_diameter", m.outer_diameter},
           {"inner_diameter", m.inner_diameter},
           {"thickness", m.thickness},
           {"pose_on_surface", m.pose_on_surface}};
}

void from_json(const json& j, RingMarker& m) {
  RingMarker out;
  out.outer_diameter = field(j, "outer_diameter", out.outer_diameter);
  out.inner_diameter = field(j, "inner_diameter", out.inner_diameter);
  out.thickness = field(j, "thickness", out.thickness);
  out.pose_on_surface = field(j, "pose_on_surface", out.pose_on_surface);
  try {
    out.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  m = std::move(out);
}

void to_json(json& j, const OrientedBox& b) { j = json{{"pose", b.pose}, {"half_extents", vec_json(b.half_extents)}}; }

void from_json(const json& j, OrientedBox& b) {
  b.pose = field(j, "pose", RigidTransform{});
  b.half_extents = j.contains("half_extents") ? json_vec(j.at("half_extents")) : Vec3::Zero();
  if ((b.half_extents.array() < 0.0).any()) config_error("box half extents must be non-negative");
}

void to_json(json& j, const DetectParams& p) {
  j = json{{"expected_outer_diameter", p.expected_outer_diameter},
           {"expected_inner_diameter", p.expected_inner_diameter},
           {"diameter_tolerance", p.diameter_tolerance},
           {"ransac_iterations", p.ransac_iterations},
           {"plane_inlier_threshold", p.plane_inlier_threshold},
           {"min_inliers", p.min_inliers},
           {"rng_seed", p.rng_seed},
           {"band_min", p.band_min},
           {"band_max", p.band_max},
           {"cluster_tolerance", p.cluster_tolerance},
           {"ambiguity_ratio", p.ambiguity_ratio}};
}

void from_json(const json& j, DetectParams& p) {
  DetectParams out;
  out.expected_outer_diameter = field(j, "expected_outer_diameter", out.expected_outer_diameter);
  out.expected_inner_diameter = field(j, "expected_inner_diameter", out.expected_inner_diameter);
  out.diameter_tolerance = field(j, "diameter_tolerance", out.diameter_tolerance);
  out.ransac_iterations = field(j, "ransac_iterations", out.ransac_iterations);
  out.plane_inlier_threshold = field(j, "plane_inlier_threshold", out.plane_inlier_threshold);
  out.min_inliers = field(j, "min_inliers", out.min_inliers);
  out.rng_seed = field(j, "rng_seed", out.rng_seed);
  out.band_min = field(j, "band_min", out.band_min);
  out.band_max = field(j, "band_max", out.band_max);
  out.cluster_tolerance = field(j, "cluster_tolerance", out.cluster_tolerance);
  out.ambiguity_ratio = field(j, "ambiguity_ratio", out.ambiguity_ratio);
  try {
    out.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  p = out;
}

void to_json(json& j, const MarkerPose& p) {
  j = json{{"center", vec_json(p.center)},
           {"normal", vec_json(p.normal)},
           {"radius_mm", p.radius},
           {"rms_mm", p.rms_residual},
           {"inliers", p.inlier_count},
           {"t", p.timestamp}};
}

void from_json(const json& j, MarkerPose& p) {
  p.center = json_vec(j.at("center"));
  p.normal = json_vec(j.at("normal"));
  p.radius = field(j, "radius_mm", 0.0);
  p.rms_residual = field(j, "rms_mm", 0.0);
  p.inlier_count = field(j, "inliers", 0);
  p.timestamp = field(j, "t", 0.0);
}

void to_json(json& j, const CalibrationSample& s) {
  j = json{{"flange_in_base", s.flange_in_base}, {"target_in_camera", s.target_in_camera}};
}

void from_json(const json& j, CalibrationSample& s) {
  if (!j.contains("flange_in_base") || !j.contains("target_in_camera")) {
    config_error("calibration sample needs flange_in_base and target_in_camera");
  }
  s.flange_in_base = j.at("flange_in_base").get<RigidTransform>();
  s.target_in_camera = j.at("target_in_camera").get<RigidTransform>();
}

void to_json(json& j, const HandEyeResult& r) {
  j = json{{"X", r.camera_in_flange},
           {"rotation_residual_deg", r.rotation_residual},
           {"translation_residual_mm", r.translation_residual},
           {"samples", r.sample_count},
           {"pairs", r.pair_count},
           {"solver", r.solver}};
}

void to_json(json& j, const ReprojectionStats& s) {
  j = json{{"mean_px", s.mean}, {"std_px", s.std}, {"max_px", s.max}, {"corners", s.per_corner_offsets.size()}};
}

void to_json(json& j, const TcpCorrection& c) {
  j = json{{"scale", vec_json(c.scale)},
           {"offset", vec_json(c.offset)},
           {"fit_pairs", c.fit_pair_count},
           {"fit_rms_mm", c.fit_rms}};
  if (c.linear) {
    json m = json::array();
    for (int r = 0; r < 3; ++r) m.push_back({(*c.linear)(r, 0), (*c.linear)(r, 1), (*c.linear)(r, 2)});
    j["linear"] = m;
  }
}

void to_json(json& j, const GateInterval& g) { j = json{{"start_s", g.start}, {"end_s", g.end}, {"mean_level_mm", g.mean_level}}; }

void to_json(json& j, const AlarmEvent& a) { j = json{{"t_s", a.t}, {"displacement_mm", a.displacement}}; }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    config_error(path.string() + ": " + e.what());
  }
}

std::string ply_text(const PointCloud& cloud) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.points.size()) +
                    "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  char buf[96];
  for (const Point3& p : cloud.points) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out += buf;
  }
  return out;
}

PointCloud parse_ply(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "ply") throw Error(ErrorCode::IoError, "not a PLY file");
  std::size_t count = 0;
  bool ascii = false;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string kind;
      ls >> kind;
      ascii = kind == "ascii";
    } else if (word == "element") {
      std::string name;
      ls >> name >> count;
      in_vertex = name == "vertex";
      if (!in_vertex) throw Error(ErrorCode::IoError, "only vertex elements are supported");
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) throw Error(ErrorCode::IoError, "only ASCII PLY is supported");
  if (props.size() < 3 || props[0] != "x" || props[1] != "y" || props[2] != "z") {
    throw Error(ErrorCode::IoError, "vertex properties must start with x y z");
  }
  PointCloud cloud;
  cloud.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw Error(ErrorCode::IoError, "PLY truncated");
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z)) throw Error(ErrorCode::IoError, "bad vertex line " + std::to_string(i));
    cloud.points.emplace_back(x, y, z);
  }
  return cloud;
}

std::filesystem::path sidecar_path(const std::filesystem::path& ply_path) {
  std::filesystem::path p = ply_path;
  return p.replace_extension(".json");
}

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  write_text_file(path, ply_text(cloud));
  const json meta{{"timestamp", cloud.timestamp}, {"seed", cloud.seed}, {"sensor_origin", vec_json(cloud.sensor_origin)}};
  write_text_file(sidecar_path(path), meta.dump(2) + "\n");
}

PointCloud load_cloud(const std::filesystem::path& path) {
  PointCloud cloud = parse_ply(read_text_file(path));
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    const json meta = read_json_file(side);
    cloud.timestamp = field(meta, "timestamp", 0.0);
    cloud.seed = field<std::uint64_t>(meta, "seed", 0);
    if (meta.contains("sensor_origin")) cloud.sensor_origin = json_vec(meta.at("sensor_origin"));
  }
  return cloud;
}

std::string records_csv(const std::vector<ExecutionRecord>& records) {
  std::string out = "obs_x,obs_y,obs_z,exec_x,exec_y,exec_z\n";
  for (const ExecutionRecord& r : records) {
    out += fixed(r.camera_observed.x(), 6) + "," + fixed(r.camera_observed.y(), 6) + "," + fixed(r.camera_observed.z(), 6) +
           "," + fixed(r.robot_executed.x(), 6) + "," + fixed(r.robot_executed.y(), 6) + "," +
           fixed(r.robot_executed.z(), 6) + "\n";
  }
  return out;
}

std::vector<ExecutionRecord> parse_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "obs_x,obs_y,obs_z,exec_x,exec_y,exec_z") {
    throw Error(ErrorCode::IoError, "unexpected execution record header");
  }
  std::vector<ExecutionRecord> out;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != 6) throw Error(ErrorCode::IoError, "execution record needs six columns");
    out.push_back({{parse_double(c[0]), parse_double(c[1]), parse_double(c[2])},
                   {parse_double(c[3]), parse_double(c[4]), parse_double(c[5])}});
  }
  return out;
}

std::string signal_csv(const BreathSignal& signal) {
  std::string out = "t_s,displacement_mm\n";
  for (const BreathSample& s : signal.samples) out += fixed(s.t, 6) + "," + fixed(s.displacement, 6) + "\n";
  return out;
}

BreathSignal parse_signal_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "t_s,displacement_mm") {
    throw Error(ErrorCode::IoError, "unexpected signal header");
  }
  BreathSignal s;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != 2) throw Error(ErrorCode::IoError, "signal row needs two columns");
    s.samples.push_back({parse_double(c[0]), parse_double(c[1])});
  }
  s.validate();
  return s;
}

}  // namespace snav
