#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lanemerge/config.hpp"
#include "lanemerge/dynamics.hpp"
#include "lanemerge/geometry.hpp"
#include "lanemerge/harness.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace lanemerge;

namespace {

Config config_from(const std::string& json) { return parse_config(json); }

py::dict episode_dict(const EpisodeResult& r) {
  py::dict d;
  d["seed"] = r.seed;
  d["regime"] = std::string(to_string(r.regime));
  d["predictor"] = r.predictor;
  d["success"] = r.success;
  d["collision"] = r.collision;
  d["timed_out"] = r.timed_out;
  d["time_to_merge"] = r.time_to_merge ? py::cast(*r.time_to_merge) : py::none();
  d["min_distance"] = r.min_distance;
  d["steps"] = r.steps;
  py::list ego;
  for (const StepLog& s : r.log) {
    ego.append(py::make_tuple(s.t, s.ego.x, s.ego.y, s.ego.psi, s.ego.v, s.input.a,
                              s.input.delta, std::string(to_string(s.mode))));
  }
  d["log"] = ego;
  return d;
}

}  // namespace

PYBIND11_MODULE(_lanemerge, m) {
  m.doc() = "Lane merge simulation core";
  m.attr("__version__") = std::string(library_version());

  py::class_<VehicleState>(m, "VehicleState")
      .def(py::init<double, double, double, double>(), "x"_a = 0.0, "y"_a = 0.0, "psi"_a = 0.0,
           "v"_a = 0.0)
      .def_readwrite("x", &VehicleState::x)
      .def_readwrite("y", &VehicleState::y)
      .def_readwrite("psi", &VehicleState::psi)
      .def_readwrite("v", &VehicleState::v)
      .def(py::self == py::self)
      .def("__repr__", [](const VehicleState& s) {
        return "VehicleState(x=" + std::to_string(s.x) + ", y=" + std::to_string(s.y) +
               ", psi=" + std::to_string(s.psi) + ", v=" + std::to_string(s.v) + ")";
      });

  py::class_<ControlInput>(m, "ControlInput")
      .def(py::init<double, double>(), "a"_a = 0.0, "delta"_a = 0.0)
      .def_readwrite("a", &ControlInput::a)
      .def_readwrite("delta", &ControlInput::delta);

  py::class_<BodyGeometry>(m, "BodyGeometry")
      .def(py::init<>())
      .def(py::init<double, double, double, double>(), "l_f"_a, "l_r"_a, "w"_a, "h"_a)
      .def_readwrite("l_f", &BodyGeometry::l_f)
      .def_readwrite("l_r", &BodyGeometry::l_r)
      .def_readwrite("w", &BodyGeometry::w)
      .def_readwrite("h", &BodyGeometry::h)
      .def("valid", &BodyGeometry::valid);

  m.def("step", &step, "state"_a, "input"_a, "geom"_a = BodyGeometry{}, "dt"_a = 0.4,
        "One forward-Euler step of the kinematic bicycle model");
  m.def("derivative", &derivative, "state"_a, "input"_a, "geom"_a = BodyGeometry{});
  m.def("slip_angle", &slip_angle, "geom"_a, "delta"_a);

  m.def(
      "circle_centers",
      [](const VehicleState& s, const BodyGeometry& g) {
        const CircleSet c = circle_centers(s, g);
        py::list out;
        for (const Point2& p : c.centers) out.append(py::make_tuple(p.x, p.y));
        return out;
      },
      "state"_a, "geom"_a = BodyGeometry{});
  m.def("pair_distance",
        py::overload_cast<const VehicleState&, const BodyGeometry&, const VehicleState&,
                          const BodyGeometry&>(&pair_distance),
        "ego"_a, "ego_geom"_a, "other"_a, "other_geom"_a);
  m.def("euclidean_min_gap",
        py::overload_cast<const VehicleState&, const BodyGeometry&, const VehicleState&,
                          const BodyGeometry&>(&euclidean_min_gap),
        "ego"_a, "ego_geom"_a, "other"_a, "other_geom"_a);

  m.def(
      "check_config",
      [](const std::string& json) {
        std::vector<std::string> warnings;
        const Config c = parse_config(json, &warnings);
        return py::make_tuple(config_to_json(c), warnings);
      },
      "json"_a = "", "Parse and validate a config; returns (resolved JSON, warnings)");

  m.def(
      "run_episode",
      [](const std::string& regime, std::uint64_t seed, const std::string& predictor,
         const std::string& config_json) {
        Config c = config_from(config_json);
        const auto r = parse_regime(regime);
        const auto p = parse_predictor_kind(predictor);
        if (!r) throw py::value_error("unknown regime: " + regime);
        if (!p) throw py::value_error("unknown predictor: " + predictor);
        c.sim.predictor.kind = *p;
        EpisodeResult res;
        {
          py::gil_scoped_release release;
          res = run_episode(build_scenario(c.sim, *r, seed), c.sim);
        }
        return episode_dict(res);
      },
      "regime"_a = "coop", "seed"_a = 1, "predictor"_a = "oracle", "config"_a = "");

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
}
