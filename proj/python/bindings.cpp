#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "snav/error.hpp"
#include "snav/fov.hpp"
#include "snav/harness.hpp"

namespace py = pybind11;
using namespace snav;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

std::vector<Point3> to_points(const Points& m) {
  std::vector<Point3> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m.row(i).transpose();
  return out;
}

RigidTransform from_matrix4(const Eigen::Matrix4d& m) {
  return RigidTransform::from_matrix(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

py::object parse_json(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json to_json_value(const py::object& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "speckle-navigation simulation core";
  m.attr("__version__") = kSoftwareVersion;

  static py::exception<Error> snav_error(m, "SnavError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = snav_error;
      py::object instance = exc(e.what());
      instance.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(exc.ptr(), instance.ptr());
    }
  });

  py::class_<RigidTransform>(m, "RigidTransform")
      .def(py::init<>())
      .def(py::init([](const Eigen::Vector4d& wxyz, const Eigen::Vector3d& t) {
             return RigidTransform(Eigen::Quaterniond(wxyz[0], wxyz[1], wxyz[2], wxyz[3]), t);
           }),
           py::arg("quaternion_wxyz"), py::arg("translation"))
      .def_static("from_matrix", &from_matrix4)
      .def_static("translation_of", py::overload_cast<const Vec3&>(&RigidTransform::translation))
      .def_static("rot_x_deg", &RigidTransform::rot_x_deg)
      .def_static("rot_y_deg", &RigidTransform::rot_y_deg)
      .def_static("rot_z_deg", &RigidTransform::rot_z_deg)
      .def_property_readonly("quaternion",
                             [](const RigidTransform& t) {
                               const auto& q = t.quaternion();
                               return Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
                             })
      .def_property_readonly("translation", [](const RigidTransform& t) { return t.translation(); })
      .def("matrix", &RigidTransform::matrix)
      .def("apply", &RigidTransform::apply)
      .def("inverse", &RigidTransform::inverse)
      .def("__mul__", &RigidTransform::operator*);

  m.def("compose", &compose);
  m.def("invert", &invert);
  m.def("pose_error", [](const RigidTransform& a, const RigidTransform& b) {
    const PoseError e = pose_error(a, b);
    return py::make_tuple(e.rotation_deg, e.translation_mm);
  });

  m.def("sigma_z", [](double d) {
    const Interpolated s = sigma_z(CameraModel{}, d);
    return py::make_tuple(s.value, s.clamped);
  });
  m.def("field_of_view", [](double d) {
    const FieldOfView f = field_of_view(CameraModel{}, d);
    return py::make_tuple(f.fov_x, f.fov_y, f.clamped);
  });
  m.def("observation_rectangle_fit",
        [](double x, double y) { return observation_rectangle_fit(CameraModel{}, x, y); });
  m.def("accuracy_estimate", [](double extent) {
    const AccuracyRange a = accuracy_estimate(extent);
    return py::make_tuple(a.low, a.high);
  });

  m.def("fit_circle_3d", [](const Points& pts) {
    const CircleFit f = fit_circle_3d(to_points(pts));
    return py::dict(py::arg("center") = f.center, py::arg("normal") = f.normal, py::arg("radius") = f.radius,
                    py::arg("rms") = f.rms);
  });
  m.def(
      "detect_ring",
      [](const Points& pts, const py::object& params) {
        PointCloud cloud;
        cloud.points = to_points(pts);
        DetectParams p = params.is_none() ? DetectParams{} : to_json_value(params).get<DetectParams>();
        return parse_json(json(detect_ring(cloud, p)));
      },
      py::arg("points"), py::arg("params") = py::none());

  m.def("solve_ax_xb", [](const std::vector<std::pair<Eigen::Matrix4d, Eigen::Matrix4d>>& pairs) {
    std::vector<CalibrationSample> samples;
    for (const auto& [f, t] : pairs) samples.push_back({from_matrix4(f), from_matrix4(t)});
    const HandEyeResult r = solve_ax_xb(samples);
    return py::make_tuple(r.camera_in_flange, r.rotation_residual, r.translation_residual);
  });
  m.def("reprojection_error", [](const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>& obs,
                                 const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>& ref) {
    std::vector<Point2> a, b;
    for (Eigen::Index i = 0; i < obs.rows(); ++i) a.push_back(obs.row(i).transpose());
    for (Eigen::Index i = 0; i < ref.rows(); ++i) b.push_back(ref.row(i).transpose());
    return parse_json(json(reprojection_error(a, b)));
  });

  m.def(
      "fit_tcp_correction",
      [](const Points& observed, const Points& executed, bool full_affine) {
        if (observed.rows() != executed.rows()) throw Error(ErrorCode::LengthMismatch, "observed/executed rows differ");
        std::vector<ExecutionRecord> r;
        for (Eigen::Index i = 0; i < observed.rows(); ++i) r.push_back({observed.row(i).transpose(), executed.row(i).transpose()});
        const TcpCorrection c = fit_tcp_correction(r, full_affine ? CorrectionModel::FullAffine : CorrectionModel::PerAxis);
        return py::make_tuple(c.scale, c.offset, c.fit_rms);
      },
      py::arg("observed"), py::arg("executed"), py::arg("full_affine") = false);
  m.def("apply_correction", [](const Vec3& scale, const Vec3& offset, const Vec3& p) {
    TcpCorrection c;
    c.scale = scale;
    c.offset = offset;
    return apply_correction(c, p);
  });

  auto to_signal = [](const std::vector<double>& t, const std::vector<double>& d) {
    if (t.size() != d.size()) throw Error(ErrorCode::LengthMismatch, "t and displacement differ in length");
    BreathSignal s;
    for (std::size_t i = 0; i < t.size(); ++i) s.samples.push_back({t[i], d[i]});
    return s;
  };
  m.def("estimate_period", [to_signal](const std::vector<double>& t, const std::vector<double>& d) {
    return estimate_period(to_signal(t, d));
  });
  m.def("detect_breath_hold", [to_signal](const std::vector<double>& t, const std::vector<double>& d, double tol,
                                          double min_duration) {
    return parse_json(json(detect_breath_hold(to_signal(t, d), tol, min_duration)));
  });
  m.def(
      "motion_alarm",
      [to_signal](const std::vector<double>& t, const std::vector<double>& d, double threshold, double window) {
        return parse_json(json(motion_alarm(to_signal(t, d), threshold, window)));
      },
      py::arg("t"), py::arg("displacement"), py::arg("threshold"), py::arg("baseline_window") = 2.0);

  m.def("default_scenario", [] { return parse_json(scenario_to_json(default_scenario())); });
  m.def(
      "run_scenario",
      [](const py::object& config) {
        const Scenario s = config.is_none() ? default_scenario() : scenario_from_json(to_json_value(config));
        RunReport r;
        {
          py::gil_scoped_release release;
          r = run_scenario(s);
        }
        return py::make_tuple(parse_json(r.report), parse_json(r.timing), r.exit_code);
      },
      py::arg("config") = py::none());
  m.def("emit_table", [](const py::object& report, const std::string& id) { return emit_table(to_json_value(report), id); });
}
