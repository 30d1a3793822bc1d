// snav: command-line front end for the simulation pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "snav/error.hpp"
#include "snav/fov.hpp"
#include "snav/harness.hpp"
#include "snav/io.hpp"

namespace fs = std::filesystem;
using namespace snav;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "scenario JSON (defaults to the bundled scenario)");
  cmd->add_option("--seed", c.seed, "override the scenario seed");
  cmd->add_option("--out", c.out, "output directory");
}

Scenario resolve(const Common& c) {
  Scenario s = c.config.empty() ? default_scenario() : load_scenario(c.config);
  if (c.seed) s.seed = *c.seed;
  if (!c.out.empty()) s.output_dir = c.out;
  return s;
}

fs::path out_dir(const Common& c, const Scenario& s) {
  if (!c.out.empty()) return c.out;
  if (!s.output_dir.empty()) return s.output_dir;
  return "snav_out";
}

void emit(const fs::path& dir, const std::string& name, const json& doc) {
  write_text_file(dir / name, doc.dump(2) + "\n");
  std::cout << doc.dump(2) << "\n";
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
    case ErrorCode::IoError:
      return kExitConfig;
    default:
      return kExitStage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speckle-navigation simulation pipeline"};
  app.require_subcommand(1);

  Common simulate_opts, calibrate_opts, detect_opts, fuse_opts, breathe_opts, fov_opts, run_opts, table_opts;

  auto* simulate = app.add_subcommand("simulate", "render one execution-site point cloud");
  add_common(simulate, simulate_opts);
  std::size_t site = 0;
  double sim_time = 0.0;
  simulate->add_option("--site", site, "marker site index");
  simulate->add_option("--time", sim_time, "seconds into the breathing cycle");

  auto* calibrate = app.add_subcommand("calibrate", "hand-eye calibration and reprojection gate");
  add_common(calibrate, calibrate_opts);
  std::string samples_file;
  calibrate->add_option("--samples", samples_file, "solve a calibration set file instead of simulating one");

  auto* detect = app.add_subcommand("detect", "ring pose from a PLY cloud");
  add_common(detect, detect_opts);
  std::string cloud_file;
  detect->add_option("--cloud", cloud_file, "PLY cloud (simulated from the scenario when omitted)");

  auto* fuse = app.add_subcommand("fuse", "fit the TCP correction from execution records");
  add_common(fuse, fuse_opts);
  std::string records_file;
  std::string model = "per-axis";
  fuse->add_option("--records", records_file, "execution record CSV")->required();
  fuse->add_option("--model", model, "per-axis | full-affine");

  auto* breathe = app.add_subcommand("breathe", "respiratory signal, period, gates and alarms");
  add_common(breathe, breathe_opts);
  std::string signal_file;
  breathe->add_option("--signal", signal_file, "signal CSV (simulated from the scenario when omitted)");

  auto* fov = app.add_subcommand("fov", "field-of-view and feasibility checks");
  add_common(fov, fov_opts);
  std::vector<double> distances;
  std::vector<double> rect;
  double extent = 0.0;
  fov->add_option("--distance", distances, "distances to report (default: table knots)");
  fov->add_option("--rect", rect, "rectangle W H to fit")->expected(2);
  fov->add_option("--extent", extent, "observation space edge length for the accuracy rule of thumb");

  auto* run = app.add_subcommand("run", "full scenario: calibrate, detect, fuse, correct, breathe, report");
  add_common(run, run_opts);

  auto* table = app.add_subcommand("emit-table", "print a report table as CSV");
  add_common(table, table_opts);
  std::string report_path;
  std::string table_id;
  table->add_option("--report", report_path, "report.json or a run output directory")->required();
  table->add_option("--table", table_id, "accuracy-vs-distance | execution-error | timing")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      const Scenario s = resolve(simulate_opts);
      const fs::path dir = out_dir(simulate_opts, s);
      const PointCloud cloud = simulate_site_cloud(s, site, sim_time);
      char name[32];
      std::snprintf(name, sizeof name, "cloud_%03zu.ply", site);
      save_cloud(dir / name, cloud);
      std::cout << "wrote " << (dir / name).string() << " (" << cloud.points.size() << " points)\n";
      return kExitOk;
    }
    if (*calibrate) {
      const Scenario s = resolve(calibrate_opts);
      const fs::path dir = out_dir(calibrate_opts, s);
      if (!samples_file.empty()) {
        const auto samples = read_json_file(samples_file).get<std::vector<CalibrationSample>>();
        json doc = solve_ax_xb(samples);
        emit(dir, "handeye.json", doc);
        return kExitOk;
      }
      const CalibrationOutcome cal = simulate_calibration(s);
      write_text_file(dir / "calibration_set.json", json(cal.samples).dump(2) + "\n");
      emit(dir, "handeye.json", cal.section);
      return cal.gate_passed ? kExitOk : kExitGate;
    }
    if (*detect) {
      const Scenario s = resolve(detect_opts);
      const fs::path dir = out_dir(detect_opts, s);
      const PointCloud cloud = cloud_file.empty() ? simulate_site_cloud(s, 0, 0.0) : load_cloud(cloud_file);
      emit(dir, "marker.json", json(detect_ring(cloud, s.detect)));
      return kExitOk;
    }
    if (*fuse) {
      const Scenario s = resolve(fuse_opts);
      const fs::path dir = out_dir(fuse_opts, s);
      const auto records = parse_records_csv(read_text_file(records_file));
      if (model != "per-axis" && model != "full-affine") throw Error(ErrorCode::ConfigError, "unknown model " + model);
      const TcpCorrection c =
          fit_tcp_correction(records, model == "per-axis" ? CorrectionModel::PerAxis : CorrectionModel::FullAffine);
      json doc = c;
      json corrected = json::array();
      for (const ExecutionRecord& r : records) corrected.push_back(vec_json(apply_correction(c, r.camera_observed)));
      doc["corrected"] = corrected;
      emit(dir, "correction.json", doc);
      return kExitOk;
    }
    if (*breathe) {
      const Scenario s = resolve(breathe_opts);
      const fs::path dir = out_dir(breathe_opts, s);
      json doc;
      BreathSignal signal;
      if (signal_file.empty()) {
        doc = simulate_breathing(s, signal);
        write_text_file(dir / "signal.csv", signal_csv(signal));
      } else {
        signal = parse_signal_csv(read_text_file(signal_file));
        const BreathingConfig& b = s.breathing;
        doc["gates"] = detect_breath_hold(signal, b.gate_tolerance_mm, b.gate_min_duration_s);
        doc["alarms"] = motion_alarm(signal, b.alarm_threshold_mm, b.alarm_window_s);
        try {
          doc["period"] = {{"estimate_s", estimate_period(signal)}};
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NoPeriodicity) throw;
          doc["period"] = {{"error", std::string(to_string(e.code()))}};
        }
      }
      emit(dir, "breathing.json", doc);
      return kExitOk;
    }
    if (*fov) {
      const Scenario s = resolve(fov_opts);
      const fs::path dir = out_dir(fov_opts, s);
      if (distances.empty()) {
        for (const FovRow& r : s.camera.fov_table.rows()) distances.push_back(r.distance);
      }
      json doc;
      json rows = json::array();
      for (double d : distances) {
        const FieldOfView f = field_of_view(s.camera, d);
        const Interpolated sz = sigma_z(s.camera, d);
        rows.push_back({{"distance_mm", d}, {"fov_x_mm", f.fov_x}, {"fov_y_mm", f.fov_y}, {"sigma_z_mm", sz.value}, {"clamped", f.clamped}});
      }
      doc["field_of_view"] = rows;
      if (rect.size() == 2) {
        const auto d = observation_rectangle_fit(s.camera, rect[0], rect[1]);
        doc["rectangle_fit"] = {{"rect", rect}, {"distance_mm", d ? json(*d) : json(nullptr)}, {"fits", d.has_value()}};
      }
      if (extent > 0.0) {
        const AccuracyRange a = accuracy_estimate(extent);
        doc["accuracy_estimate"] = {{"extent_mm", extent}, {"low_mm", a.low}, {"high_mm", a.high}, {"note", a.note}};
      }
      emit(dir, "fov.json", doc);
      return kExitOk;
    }
    if (*run) {
      const Scenario s = resolve(run_opts);
      const fs::path dir = out_dir(run_opts, s);
      const RunReport r = run_scenario(s);
      write_report(r, dir);
      const std::string status = r.report.value("status", "");
      std::cout << "status: " << status << "\n";
      if (r.report.contains("error")) std::cout << "error: " << r.report.at("error").dump() << "\n";
      std::cout << "report: " << (dir / "report.json").string() << "\n";
      return r.exit_code;
    }
    if (*table) {
      fs::path p = report_path;
      json doc;
      if (fs::is_directory(p)) {
        doc = read_json_file(p / "report.json");
        if (fs::exists(p / "timing.json")) doc["timing"] = read_json_file(p / "timing.json");
      } else {
        doc = read_json_file(p);
        const fs::path timing = p.parent_path() / "timing.json";
        if (!doc.contains("timing") && fs::exists(timing)) doc["timing"] = read_json_file(timing);
      }
      const std::string csv = emit_table(doc, table_id);
      if (!table_opts.out.empty()) write_text_file(fs::path(table_opts.out) / (table_id + ".csv"), csv);
      std::cout << csv;
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitStage;
  }
  return kExitOk;
}
