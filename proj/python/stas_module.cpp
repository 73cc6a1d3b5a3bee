#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "stas/cli/run_cli.hpp"
#include "stas/consistency.hpp"
#include "stas/error.hpp"
#include "stas/profiler.hpp"
#include "stas/steering.hpp"
#include "stas/topology.hpp"
#include "stas/trace_io.hpp"

namespace py = pybind11;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

namespace {

stas::Matrix to_matrix(const FloatArray& a) {
  if (a.ndim() != 2) throw stas::ShapeMismatch("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return stas::Matrix(rows, cols, std::vector<float>(a.data(), a.data() + rows * cols));
}

FloatArray to_array(const stas::Matrix& m) {
  FloatArray out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

std::vector<std::size_t> indices(const stas::TokenSet& s) { return {s.indices().begin(), s.indices().end()}; }

py::dict raw_record_dict(const stas::RawRecord& r) {
  py::dict d;
  d["meta"] = py::module_::import("json").attr("loads")(r.meta.dump());
  d["data"] = to_array(r.data);
  return d;
}

}  // namespace

PYBIND11_MODULE(_stas, m) {
  m.doc() = "Massive-activation profiling and structured activation steering";

  py::register_exception<stas::Error>(m, "StasError", PyExc_ValueError);

  py::class_<stas::TokenTopology>(m, "TokenTopology")
      .def_readonly("latent_frames", &stas::TokenTopology::latent_frames)
      .def_readonly("tokens_per_frame", &stas::TokenTopology::tokens_per_frame)
      .def_readonly("r_temp", &stas::TokenTopology::r_temp)
      .def_readonly("pixel_frames", &stas::TokenTopology::pixel_frames)
      .def_property_readonly("total_tokens", &stas::TokenTopology::total_tokens)
      .def("latent_of_pixel", &stas::TokenTopology::latent_of_pixel);

  m.def("build_topology", &stas::build_topology, py::arg("pixel_frames"), py::arg("r_temp"),
        py::arg("tokens_per_frame"));
  m.def("boundary_count", &stas::boundary_count, py::arg("tokens_per_frame"), py::arg("p"));
  m.def("first_frame_tokens", [](const stas::TokenTopology& t) { return indices(stas::first_frame_tokens(t)); });
  m.def("boundary_tokens", [](const stas::TokenTopology& t, double p) { return indices(stas::boundary_tokens(t, p)); });
  m.def("target_set", [](const stas::TokenTopology& t, double p) { return indices(stas::target_set(t, p)); });
  m.def("classify_frame_pair", [](const stas::TokenTopology& t, std::size_t f) {
    return std::string(stas::to_string(stas::classify_frame_pair(t, f)));
  });

  m.def(
      "apply_stas",
      [](const FloatArray& x, std::vector<std::size_t> dims, std::vector<std::size_t> tokens, double alpha) {
        return to_array(stas::apply_stas(to_matrix(x), dims, stas::TokenSet(std::move(tokens)), alpha));
      },
      py::arg("x"), py::arg("dims"), py::arg("tokens"), py::arg("alpha"));
  m.def(
      "apply_scaling",
      [](const FloatArray& x, std::vector<std::size_t> dims, std::vector<std::size_t> tokens, double omega) {
        return to_array(stas::apply_scaling(to_matrix(x), dims, stas::TokenSet(std::move(tokens)), omega));
      },
      py::arg("x"), py::arg("dims"), py::arg("tokens"), py::arg("omega"));
  m.def(
      "dg_combine",
      [](const FloatArray& full, const FloatArray& degraded, double omega) {
        return to_array(stas::dg_combine(to_matrix(full), to_matrix(degraded), omega));
      },
      py::arg("full"), py::arg("degraded"), py::arg("omega"));

  m.def(
      "classify",
      [](const std::vector<FloatArray>& snapshots, double ma_threshold, double sigma_mult) {
        if (snapshots.empty()) throw stas::EmptyProfile("no snapshots given");
        stas::DimensionProfile p(static_cast<std::size_t>(snapshots.front().shape(1)));
        for (const auto& s : snapshots) p.accumulate(to_matrix(s));
        return py::module_::import("json").attr("loads")(stas::classify(p, ma_threshold, sigma_mult).to_json().dump());
      },
      py::arg("snapshots"), py::arg("ma_threshold") = stas::kDefaultMaThreshold,
      py::arg("sigma_mult") = stas::kDefaultSigmaMult);

  m.def(
      "pairwise_similarity",
      [](const FloatArray& embeddings) {
        return stas::pairwise_similarity({to_matrix(embeddings), "", "", std::nullopt});
      },
      py::arg("embeddings"));

  m.def(
      "read_trace_file",
      [](const std::string& path) {
        py::list out;
        for (const auto& r : stas::read_raw_trace_file(path)) out.append(raw_record_dict(r));
        return out;
      },
      py::arg("path"));
  m.def(
      "write_trace_file",
      [](const std::string& path, const py::list& records) {
        std::vector<stas::RawRecord> raw;
        const auto dumps = py::module_::import("json").attr("dumps");
        for (const auto& item : records) {
          const auto d = item.cast<py::dict>();
          raw.push_back({nlohmann::json::parse(dumps(d["meta"]).cast<std::string>()),
                         to_matrix(d["data"].cast<FloatArray>())});
        }
        stas::write_raw_trace_file(path, raw);
      },
      py::arg("path"), py::arg("records"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = stas::cli::run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
