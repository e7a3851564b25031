#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ccb/breaker.hpp"
#include "ccb/cli.hpp"
#include "ccb/dissonance.hpp"
#include "ccb/errors.hpp"
#include "ccb/layer_sweep.hpp"
#include "ccb/report.hpp"
#include "ccb/stat_engine.hpp"
#include "ccb/synth_forge.hpp"
#include "ccb/trace_store.hpp"

namespace py = pybind11;
using namespace ccb;

namespace {

using Labels = std::vector<std::uint8_t>;

nlohmann::json parse(const std::string& text) { return nlohmann::json::parse(text); }

py::array_t<float> layer_array(const TraceSet& set, int layer) {
  if (layer < 0 || layer >= set.header.num_layers) throw ValidationError("layer out of range");
  const auto d = static_cast<py::ssize_t>(set.header.hidden_dim);
  py::array_t<float> out({static_cast<py::ssize_t>(set.size()), d});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto h = set.hidden(i, layer);
    for (py::ssize_t k = 0; k < d; ++k) view(static_cast<py::ssize_t>(i), k) = h[static_cast<std::size_t>(k)];
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Layer-wise truth probes, dissonance scoring and a runtime circuit breaker";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<CorruptionError>(m, "CorruptionError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::class_<TraceHeader>(m, "TraceHeader")
      .def_readonly("format_version", &TraceHeader::format_version)
      .def_readonly("model_id", &TraceHeader::model_id)
      .def_readonly("dataset_id", &TraceHeader::dataset_id)
      .def_readonly("num_layers", &TraceHeader::num_layers)
      .def_readonly("hidden_dim", &TraceHeader::hidden_dim)
      .def_property_readonly("extraction_mode", [](const TraceHeader& h) { return to_string(h.extraction_mode); })
      .def_readonly("stored_temperature", &TraceHeader::stored_temperature)
      .def_readonly("record_count", &TraceHeader::record_count);

  py::class_<TraceSet>(m, "TraceSet")
      .def_readonly("header", &TraceSet::header)
      .def("__len__", &TraceSet::size)
      .def("__eq__", [](const TraceSet& a, const TraceSet& b) { return a == b; })
      .def("labels", [](const TraceSet& s) { return labels_of(s); })
      .def("example_ids",
           [](const TraceSet& s) {
             std::vector<std::uint64_t> ids;
             for (const auto& r : s.records) ids.push_back(r.example_id);
             return ids;
           })
      .def("p_semantic",
           [](const TraceSet& s) {
             std::vector<double> p;
             for (const auto& r : s.records) p.push_back(r.p_semantic_t);
             return p;
           })
      .def("layer", &layer_array, py::arg("layer"), "Hidden vectors of one layer as an (n, D) float32 array");

  m.def("read_trace", &read_trace, py::arg("path"));
  m.def("write_trace", &write_trace, py::arg("set"), py::arg("path"));
  m.def("balance_classes", &balance_classes, py::arg("set"), py::arg("seed"));
  m.def(
      "stratified_split",
      [](const TraceSet& s, double train, double val, double test, std::uint64_t seed) {
        return stratified_split(s, {train, val, test}, seed);
      },
      py::arg("set"), py::arg("train") = 0.6, py::arg("val") = 0.2, py::arg("test") = 0.2, py::arg("seed") = 42);

  m.def(
      "generate", [](const std::string& spec_json) { return generate(synth_spec_from_json(parse(spec_json))); },
      py::arg("spec_json") = "{}");
  m.def(
      "analytic_layer_auroc",
      [](const std::string& spec_json, int layer) {
        return analytic_layer_auroc(synth_spec_from_json(parse(spec_json)), layer);
      },
      py::arg("spec_json"), py::arg("layer"));

  m.def(
      "auroc", [](const std::vector<double>& s, const Labels& y) { return auroc(s, y); }, py::arg("scores"),
      py::arg("labels"));
  m.def(
      "best_f1_threshold",
      [](const std::vector<double>& s, const Labels& y) {
        const auto r = best_f1_threshold(s, y);
        return py::make_tuple(r.tau, r.f1);
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "bootstrap_ci",
      [](const std::vector<double>& s, const Labels& y, int iterations, std::uint64_t seed,
         int min_class) -> py::object {
        const auto ci = bootstrap_ci(s, y, iterations, seed, min_class);
        if (!ci.available) return py::none();
        return py::make_tuple(ci.lower, ci.upper);
      },
      py::arg("scores"), py::arg("labels"), py::arg("iterations") = kDefaultBootstrapIterations,
      py::arg("seed") = 42, py::arg("min_class") = kDefaultMinClass,
      "(lower, upper), or None when a class is below min_class");
  m.def(
      "paired_bootstrap_pvalue",
      [](const std::vector<double>& a, const std::vector<double>& b, const Labels& y, int iterations,
         std::uint64_t seed) { return paired_bootstrap_pvalue(a, b, y, iterations, seed); },
      py::arg("scores_a"), py::arg("scores_b"), py::arg("labels"), py::arg("iterations") = kDefaultBootstrapIterations,
      py::arg("seed") = 42);

  m.def(
      "semantic_confidence",
      [](const std::vector<double>& logits, double t) { return semantic_confidence(logits, t); }, py::arg("logits"),
      py::arg("temperature") = kDefaultTemperature);
  m.def("dissonance_delta", &dissonance_delta, py::arg("p_semantic"), py::arg("p_latent"));

  m.def(
      "run_sweep",
      [](const TraceSet& train, int folds, std::uint64_t seed, double lambda) {
        return to_json(run_sweep(train, folds, seed, lambda)).dump();
      },
      py::arg("train"), py::arg("folds") = kDefaultFolds, py::arg("seed") = 42, py::arg("lambda_") = kDefaultLambda,
      "Sweep result as a JSON string");
  m.def(
      "emergence_csv", [](const std::string& sweep_json) { return emergence_csv(sweep_from_json(parse(sweep_json))); },
      py::arg("sweep_json"));

  py::class_<BreakerConfig>(m, "Breaker")
      .def_static(
          "from_json", [](const std::string& text) { return breaker_from_json(parse(text)); }, py::arg("text"))
      .def_readonly("tau_delta", &BreakerConfig::tau_delta)
      .def_readonly("temperature", &BreakerConfig::temperature)
      .def_property_readonly("layer_index", [](const BreakerConfig& b) { return b.probe.layer_index; })
      .def_property_readonly("dim", [](const BreakerConfig& b) { return b.probe.dim(); })
      .def("to_json", [](const BreakerConfig& b) { return to_json(b).dump(); })
      .def(
          "evaluate",
          [](const BreakerConfig& b, const std::string& event_json) {
            return verdict_record(evaluate(b, event_from_json(parse(event_json)))).dump();
          },
          py::arg("event_json"), "One monitor event in, one verdict record out (both JSON strings)")
      .def(
          "bench",
          [](const BreakerConfig& b, int iterations, std::uint64_t seed) {
            const auto s = bench_latency(b, static_cast<int>(b.probe.dim()), iterations, seed);
            return py::dict(py::arg("p50_ns") = s.p50_ns, py::arg("p99_ns") = s.p99_ns,
                            py::arg("mean_ns") = s.mean_ns, py::arg("iterations") = s.iterations);
          },
          py::arg("iterations") = 10000, py::arg("seed") = 42);

  m.def(
      "cli",
      [](const std::vector<std::string>& args, const std::string& stdin_text) {
        std::istringstream in(stdin_text);
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli_main(args, in, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), py::arg("stdin") = "", "Run a ccb subcommand; returns (exit_code, stdout, stderr)");
}
