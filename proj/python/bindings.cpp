#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rigcn/cli.hpp"
#include "rigcn/errors.hpp"
#include "rigcn/experiment.hpp"
#include "rigcn/train.hpp"

namespace py = pybind11;
using namespace rigcn;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

PointCloud to_cloud(const Points& pts) {
  PointCloud c;
  c.points.reserve(static_cast<std::size_t>(pts.rows()));
  for (Eigen::Index i = 0; i < pts.rows(); ++i) c.points.emplace_back(pts(i, 0), pts(i, 1), pts(i, 2));
  return c;
}

Points to_array(const std::vector<Vec3>& pts) {
  Points out(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return out;
}

RiGcnConfig config_from(const py::object& config) {
  if (config.is_none()) return {};
  const std::string text = py::str(py::module_::import("json").attr("dumps")(config));
  return config_from_json(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_rigcn, m) {
  m.doc() = "Rotation-invariant point cloud recognition (fp64 reference implementation)";

  // translators run in reverse registration order: the base goes first
  const py::object base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<InvalidArgumentError>(m, "InvalidArgumentError", base.ptr());
  py::register_exception<InvalidInputError>(m, "InvalidInputError", base.ptr());
  py::register_exception<TrainingDivergenceError>(m, "TrainingDivergenceError", base.ptr());

  m.def("normalize_unit_sphere", [](const Points& pts) {
    return to_array(normalize_unit_sphere(to_cloud(pts)).points);
  }, py::arg("points"));

  m.def("farthest_point_sampling", [](const Points& pts, std::size_t count) {
    return farthest_point_sampling(to_cloud(pts).points, count);
  }, py::arg("points"), py::arg("count"));

  m.def("dilated_knn", [](const Points& pts, std::size_t anchor, int k, int d) {
    return dilated_knn(to_cloud(pts).points, anchor, {k, d}).members;
  }, py::arg("points"), py::arg("anchor"), py::arg("k"), py::arg("d"));

  m.def("estimate_lrf", [](const Points& pts, std::size_t anchor, int k, int d) {
    const auto cloud = to_cloud(pts);
    const auto frame = estimate_lrf(cloud.points, anchor, dilated_knn(cloud.points, anchor, {k, d}));
    return frame.axes;
  }, py::arg("points"), py::arg("anchor"), py::arg("k"), py::arg("d"),
     "Columns of the returned matrix are the frame axes, by descending eigenvalue.");

  m.def("random_rotation", [](const std::string& mode, std::uint64_t seed) {
    Rng rng(seed);
    return random_rotation(rng, parse_rotation_mode(mode));
  }, py::arg("mode") = "so3", py::arg("seed") = 0);

  m.def("knn_graph", [](const Points& pts, int khat) {
    return build_knn_graph(to_cloud(pts).points, khat).weights;
  }, py::arg("points"), py::arg("khat"));

  m.def("renormalize", [](const nn::Matrix& weights) {
    return renormalize(WeightedGraph{weights}).entries;
  }, py::arg("weights"));

  m.def("synthetic_families", &synthetic_families);

  m.def("generate_shape", [](const std::string& family, std::size_t points, std::uint64_t seed) {
    Rng rng(seed);
    return to_array(generate_shape(family, points, 0.15, 0.2, rng).points);
  }, py::arg("family"), py::arg("points") = 1024, py::arg("seed") = 0);

  py::class_<RiGcnModel>(m, "Model")
      .def(py::init([](const py::object& config) { return RiGcnModel(config_from(config)); }),
           py::arg("config") = py::none(), "Builds a freshly initialized model from a config dict.")
      .def_property_readonly("config", [](const RiGcnModel& model) {
        return py::module_::import("json").attr("loads")(to_json(model.config()).dump());
      })
      .def_property_readonly("num_parameters", [](const RiGcnModel& model) { return model.params().scalar_count(); })
      .def("parameter_names", [](const RiGcnModel& model) {
        std::vector<std::string> names;
        for (const auto& p : model.params().all()) names.push_back(p.name);
        return names;
      })
      .def("predict_logits", [](const RiGcnModel& model, const Points& pts) {
        py::gil_scoped_release release;
        return Eigen::VectorXd(predict_logits(model, to_cloud(pts)).row(0).transpose());
      }, py::arg("points"), "Deterministic logits for an N x 3 cloud.")
      .def("save", [](const RiGcnModel& model, const std::filesystem::path& path) { save_checkpoint(path, model); },
           py::arg("path"));

  m.def("load_checkpoint", [](const std::filesystem::path& path) {
    auto loaded = load_checkpoint(path);
    return py::make_tuple(std::move(loaded.model),
                          py::module_::import("json").attr("loads")(loaded.metadata.dump()));
  }, py::arg("path"), "Returns (model, metadata).");

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs a command line verb; returns (exit_code, stdout, stderr).");
}
