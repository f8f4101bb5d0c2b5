// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "nert/coordinates.hpp"
#include "nert/error.hpp"
#include "nert/pipeline.hpp"
#include "nert/synthetic.hpp"

namespace py = pybind11;
using namespace nert;

namespace {

// JSON crosses the boundary as text; the Python side decodes it with the json module.
std::string json_text(const nlohmann::json& j) { return j.dump(); }

RunConfig config_from_text(const std::string& text) { return nlohmann::json::parse(text).get<RunConfig>(); }

py::dict dataset_dict(const SignalDataset& d) {
  py::dict out;
  out["name"] = d.name;
  out["coord_names"] = d.coord_names;
  out["feature_names"] = d.feature_names;
  out["points"] = d.points();
  out["features"] = d.features();
  out["raw_coords"] = std::vector<double>(d.raw_coords.data().begin(), d.raw_coords.data().end());
  out["targets"] = std::vector<double>(d.targets.data().begin(), d.targets.data().end());
  std::vector<int> roles;
  for (Role r : d.roles) roles.push_back(static_cast<int>(r));
  out["roles"] = roles;
  return out;
}

}  // namespace

PYBIND11_MODULE(_nert, m) {
  m.doc() = "Neural representation of time series: native core";

  auto base = py::register_exception<Error>(m, "NertError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", base.ptr());
  py::register_exception<IndexError>(m, "IndexError", base.ptr());
  py::register_exception<OrderError>(m, "OrderError", base.ptr());

  m.def("benchmark_names", &benchmark_names);
  m.def("sine_target", &sine_target);
  m.def("minmax_scale", &minmax_scale, py::arg("v"), py::arg("vmin"), py::arg("vmax"), py::arg("smin") = 0.0,
        py::arg("smax") = 1.0);
  m.def("onehot", [](std::size_t j, std::size_t m) { return onehot(j, m).onehot; });

  m.def("default_config", [] { return json_text(RunConfig{}); });
  m.def(
      "apply_presets",
      [](const std::string& config, std::optional<double> penalty, std::optional<std::size_t> epochs) {
        RunConfig c = config_from_text(config);
        apply_presets(c, {penalty, epochs});
        return json_text(c);
      },
      py::arg("config"), py::arg("penalty_weight") = py::none(), py::arg("epochs") = py::none());
  m.def(
      "load_data",
      [](const std::string& config) {
        const RunConfig c = config_from_text(config);
        return dataset_dict(load_data(c.data, c.seed));
      },
      py::arg("config"));
  m.def(
      "make_benchmark",
      [](const std::string& name, std::size_t points, std::uint64_t seed) {
        BenchmarkConfig bc;
        bc.points = points;
        bc.seed = seed;
        return dataset_dict(make_benchmark(name, bc));
      },
      py::arg("name"), py::arg("points") = 0, py::arg("seed") = 0);

  m.def(
      "train",
      [](const std::string& config, const std::filesystem::path& dir) {
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_train(config_from_text(config), dir);
        }
        return json_text(read_json(dir / "report.json"));
      },
      py::arg("config"), py::arg("run_dir"));
  m.def(
      "evaluate",
      [](const std::filesystem::path& dir, bool raw_units) {
        EvalOptions o = read_manifest(dir).eval;
        o.raw_units = raw_units;
        return json_text(evaluate_run(dir, o).to_json(read_json(dir / "report.json").at("feature_names")));
      },
      py::arg("run_dir"), py::arg("raw_units") = false);
  m.def(
      "predict",
      [](const std::filesystem::path& dir, const std::vector<std::vector<double>>& coords, bool raw_units) {
        if (coords.empty()) throw ConfigError("predict needs at least one coordinate row");
        const std::size_t width = coords.front().size();
        std::vector<double> flat;
        for (const auto& row : coords) {
          if (row.size() != width) throw DimensionError("coordinate rows must have equal length");
          flat.insert(flat.end(), row.begin(), row.end());
        }
        const PredictionTable t = predict_run(dir, Tensor({coords.size(), width}, std::move(flat)), raw_units);
        py::dict out;
        out["feature_names"] = t.feature_names;
        out["value"] = t.value;
        out["period"] = t.period;
        out["scale"] = t.scale;
        return out;
      },
      py::arg("run_dir"), py::arg("coords"), py::arg("raw_units") = false);
  m.def(
      "compare",
      [](const std::vector<std::filesystem::path>& dirs) { return comparison_markdown(compare_runs(dirs)); },
      py::arg("run_dirs"));
  m.def(
      "meta_train",
      [](const std::string& config, std::size_t samples, const std::filesystem::path& dir) {
        {
          py::gil_scoped_release release;
          run_meta_train(config_from_text(config), samples, dir);
        }
        return json_text(read_json(dir / "report.json"));
      },
      py::arg("config"), py::arg("samples"), py::arg("run_dir"));
  m.def(
      "adapt",
      [](const std::filesystem::path& dir, std::size_t unseen, std::optional<std::size_t> steps) {
        return json_text(run_adapt(dir, unseen, steps).to_json());
      },
      py::arg("run_dir"), py::arg("unseen") = 2, py::arg("steps") = py::none());
}
