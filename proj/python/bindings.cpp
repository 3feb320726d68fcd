#include "pcreid/cli.hpp"
#include "pcreid/encoder.hpp"
#include "pcreid/error.hpp"
#include "pcreid/geometry.hpp"
#include "pcreid/imprints.hpp"
#include "pcreid/synthdata.hpp"
#include "pcreid/tracking.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <iostream>
#include <sstream>

namespace py = pybind11;
using namespace pcreid;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;

PointCloud to_cloud(const Points& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("point arrays must have shape (N, 3)");
  PointCloud c;
  const auto r = a.unchecked<2>();
  c.points.reserve(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) c.points.emplace_back(r(i, 0), r(i, 1), r(i, 2));
  return c;
}

PersonSequence to_sequence(const std::vector<Points>& frames) {
  PersonSequence s;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    s.frames.push_back(to_cloud(frames[f]));
    s.timestamps.push_back(static_cast<double>(f));
  }
  return s;
}

RingConfig ring_of(int views, int image_size, double radius, double camera_height) {
  RingConfig r;
  r.views = views;
  r.image_size = image_size;
  r.radius = radius;
  r.camera_height = camera_height;
  return r;
}

// JSON round trip through Python's json module keeps the bindings small.
nlohmann::json to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Point-cloud person re-identification core";
  py::register_exception<Error>(m, "PcreidError", PyExc_RuntimeError);

  py::class_<Model>(m, "Model")
      .def_static(
          "init", [](const py::dict& config, std::uint64_t seed) { return Model::init(EncoderConfig::from_json(to_json(config)), seed); },
          py::arg("config"), py::arg("seed") = 0, "Randomly initialised encoder from an EncoderConfig dict")
      .def_property_readonly("config", [](const Model& model) { return from_json(model.config.to_json()); })
      .def(
          "save", [](const Model& model, const std::filesystem::path& path) { save_checkpoint(model, path); },
          py::arg("path"));

  m.def("load_checkpoint", py::overload_cast<const std::filesystem::path&>(&load_checkpoint), py::arg("path"));

  m.def(
      "render_views",
      [](const std::vector<Points>& frames, int views, int image_size, bool metric_crop, double radius,
         double camera_height) {
        const DepthViewStack s =
            render_sequence(to_sequence(frames), ring_of(views, image_size, radius, camera_height), metric_crop);
        py::array_t<std::uint8_t> out({s.views, s.frames, s.height, s.width, 3});
        std::copy(s.data.begin(), s.data.end(), out.mutable_data());
        return out;
      },
      py::arg("frames"), py::arg("views") = 4, py::arg("image_size") = 32, py::arg("metric_crop") = true,
      py::arg("radius") = 2.5, py::arg("camera_height") = 1.0,
      "Render a sequence of (N, 3) clouds to a (views, frames, H, W, 3) depth-colour array");

  m.def(
      "embed",
      [](const Model& model, const std::vector<Points>& frames, int views, bool metric_crop) {
        const DepthViewStack s =
            render_sequence(to_sequence(frames), ring_of(views, model.config.image_size, 2.5, 1.0), metric_crop);
        const MultiViewEmbedding e = encode_sequence(s, model);
        const auto rows = e.per_view.front().rows(), cols = e.per_view.front().cols();
        py::array_t<float> out({static_cast<py::ssize_t>(e.views()), static_cast<py::ssize_t>(rows),
                                static_cast<py::ssize_t>(cols)});
        auto w = out.mutable_unchecked<3>();
        for (int v = 0; v < e.views(); ++v)
          for (long r = 0; r < rows; ++r)
            for (long c = 0; c < cols; ++c) w(v, r, c) = e.per_view[static_cast<std::size_t>(v)](r, c);
        return out;
      },
      py::arg("model"), py::arg("frames"), py::arg("views") = 4, py::arg("metric_crop") = true,
      "Per-view part embeddings, shape (views, parts, dim)");

  m.def(
      "solve_assignment",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& costs) {
        if (costs.ndim() != 2) throw py::value_error("cost matrix must be 2-D");
        Eigen::MatrixXd c(costs.shape(0), costs.shape(1));
        const auto r = costs.unchecked<2>();
        for (py::ssize_t i = 0; i < costs.shape(0); ++i)
          for (py::ssize_t j = 0; j < costs.shape(1); ++j) c(i, j) = r(i, j);
        const Assignment a = solve_assignment(c);
        py::dict out;
        out["pairs"] = a.pairs;
        out["cost"] = a.cost;
        out["unmatched_rows"] = a.unmatched_rows;
        out["unmatched_cols"] = a.unmatched_cols;
        return out;
      },
      py::arg("costs"), "Max-cardinality, min-cost matching; inf marks forbidden pairs");

  m.def(
      "accumulate_imprint",
      [](const std::vector<Points>& frames, double cell, double margin) {
        const PersonSequence s = to_sequence(frames);
        std::vector<Point3> all;
        for (const auto& f : s.frames) all.insert(all.end(), f.points.begin(), f.points.end());
        const GridSpec spec = grid_covering(all, cell, margin);
        const OccupancyGrid g = accumulate_imprint(s.frames, spec);
        py::array_t<double> counts({spec.rows, spec.cols});
        std::copy(g.counts.begin(), g.counts.end(), counts.mutable_data());
        return py::make_tuple(counts, from_json(spec.to_json()));
      },
      py::arg("frames"), py::arg("cell") = 0.05, py::arg("margin") = 0.25,
      "Per-frame covered-cell counts (rows = y, cols = x) and the grid spec");

  m.def(
      "generate_dataset",
      [](const std::filesystem::path& out_dir, const py::dict& spec) {
        nlohmann::json j = ScenarioSpec{}.to_json();
        j.merge_patch(to_json(spec));
        const ScenarioSpec s = ScenarioSpec::from_json(j);
        s.validate();
        const Manifest manifest = generate_dataset(s, out_dir);
        return manifest.entries.size();
      },
      py::arg("out_dir"), py::arg("spec") = py::dict(),
      "Write a synthetic dataset (sequence files + manifest.json); returns the sequence count");

  m.def(
      "main",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::dispatch(args, out, err);
        py::print(out.str(), py::arg("end") = "");
        if (!err.str().empty()) py::print(err.str(), py::arg("end") = "", py::arg("file") = py::module_::import("sys").attr("stderr"));
        return code;
      },
      py::arg("args"), "Run a pcreid subcommand in-process; returns the exit status");
}
