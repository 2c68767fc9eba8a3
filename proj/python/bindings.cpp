// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <vector>

#include "nlroi/cli.hpp"
#include "nlroi/config_file.hpp"
#include "nlroi/errors.hpp"
#include "nlroi/gradcheck.hpp"
#include "nlroi/nlroi.hpp"
#include "nlroi/oracle.hpp"
#include "nlroi/toy_task.hpp"
#include "nlroi/weights_io.hpp"

namespace py = pybind11;
using namespace nlroi;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array a(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

py::dict to_dict(const std::vector<NamedTensor>& named) {
  py::dict d;
  for (const auto& [name, t] : named) d[py::str(name)] = to_array(t);
  return d;
}

std::vector<NamedTensor> from_dict(const py::dict& d) {
  std::vector<NamedTensor> named;
  for (const auto& [k, v] : d) named.push_back({k.cast<std::string>(), to_tensor(v.cast<Array>())});
  return named;
}

template <typename E>
void register_error(py::module_& m, const char* name, py::handle base) {
  py::register_exception<E>(m, name, base);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Non-local RoI operator: forward, backward, oracle and tooling";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  register_error<DimensionError>(m, "DimensionError", error);
  register_error<DegenerateAttentionError>(m, "DegenerateAttentionError", error);
  register_error<NumericalError>(m, "NumericalError", error);
  register_error<ConfigError>(m, "ConfigError", error);
  register_error<FormatError>(m, "FormatError", error);
  register_error<CorruptionError>(m, "CorruptionError", error);
  register_error<InsufficientDataError>(m, "InsufficientDataError", error);
  register_error<ResourceError>(m, "ResourceError", error);
  register_error<ParseError>(m, "ParseError", error);
  register_error<DivergenceError>(m, "DivergenceError", error);

  py::enum_<Scaling>(m, "Scaling")
      .value("PER_CHANNEL", Scaling::kPerChannel)
      .value("FULL_FLATTEN", Scaling::kFullFlatten);
  py::enum_<DiagonalMode>(m, "DiagonalMode")
      .value("MASK_OUT", DiagonalMode::kMaskOut)
      .value("LITERAL_ZERO", DiagonalMode::kLiteralZero);

  py::class_<NlRoiConfig>(m, "Config")
      .def(py::init<>())
      .def_static("with_defaults", &NlRoiConfig::with_defaults, py::arg("d"), py::arg("h"),
                  py::arg("w"))
      .def_readwrite("d", &NlRoiConfig::d)
      .def_readwrite("d_f", &NlRoiConfig::d_f)
      .def_readwrite("d_mid", &NlRoiConfig::d_mid)
      .def_readwrite("d_g", &NlRoiConfig::d_g)
      .def_readwrite("h", &NlRoiConfig::h)
      .def_readwrite("w", &NlRoiConfig::w)
      .def_readwrite("attend_to_self", &NlRoiConfig::attend_to_self)
      .def_readwrite("scaling", &NlRoiConfig::scaling)
      .def_readwrite("diagonal_mode", &NlRoiConfig::diagonal_mode)
      .def("validate", &NlRoiConfig::validate)
      .def("scale", &NlRoiConfig::scale)
      .def("__eq__", [](const NlRoiConfig& a, const NlRoiConfig& b) { return a == b; })
      .def("__repr__", [](const NlRoiConfig& c) {
        std::ostringstream os;
        os << "Config(d=" << c.d << ", d_f=" << c.d_f << ", d_mid=" << c.d_mid
           << ", d_g=" << c.d_g << ", h=" << c.h << ", w=" << c.w
           << ", attend_to_self=" << (c.attend_to_self ? "True" : "False") << ", scaling="
           << (c.scaling == Scaling::kPerChannel ? "PER_CHANNEL" : "FULL_FLATTEN") << ")";
        return os.str();
      });

  py::class_<NlRoiParams>(m, "Params")
      .def_static("zeros", &NlRoiParams::zeros, py::arg("config"))
      .def_static(
          "from_dict",
          [](const py::dict& d, const NlRoiConfig& cfg) {
            return NlRoiParams::from_named(from_dict(d), cfg);
          },
          py::arg("tensors"), py::arg("config"))
      .def("to_dict", [](const NlRoiParams& p) { return to_dict(p.to_named()); })
      .def("__eq__", [](const NlRoiParams& a, const NlRoiParams& b) { return a == b; });

  m.def(
      "init_params",
      [](const NlRoiConfig& cfg, std::uint64_t seed) {
        Prng prng(seed);
        return init_params(cfg, prng);
      },
      py::arg("config"), py::arg("seed"));

  py::class_<ForwardResult>(m, "ForwardResult")
      .def_property_readonly("output", [](const ForwardResult& r) { return to_array(r.output); })
      .def_property_readonly("scores",
                             [](const ForwardResult& r) { return to_array(r.cache.scores); })
      .def_property_readonly("attention",
                             [](const ForwardResult& r) { return to_array(r.cache.attention); })
      .def_property_readonly("embedded",
                             [](const ForwardResult& r) { return to_array(r.cache.embedded); })
      .def_property_readonly("aggregated",
                             [](const ForwardResult& r) { return to_array(r.cache.aggregated); });

  m.def(
      "forward",
      [](const Array& x, const NlRoiParams& p, const NlRoiConfig& cfg) {
        return nlroi_forward(to_tensor(x), p, cfg);
      },
      py::arg("x"), py::arg("params"), py::arg("config"));
  m.def(
      "backward",
      [](const ForwardResult& r, const NlRoiParams& p, const Array& dout) {
        const NlRoiGrads g = nlroi_backward(r.cache, p, to_tensor(dout));
        return py::make_tuple(to_array(g.dx), to_dict(g.dparams.to_named()));
      },
      py::arg("result"), py::arg("params"), py::arg("dout"));
  m.def(
      "reference",
      [](const Array& x, const NlRoiParams& p, const NlRoiConfig& cfg) {
        return to_array(nlroi_reference(to_tensor(x), p, cfg));
      },
      py::arg("x"), py::arg("params"), py::arg("config"));
  m.def(
      "attention_weights",
      [](const Array& s, bool attend_to_self, DiagonalMode mode) {
        return to_array(attention_weights(to_tensor(s), attend_to_self, mode));
      },
      py::arg("scores"), py::arg("attend_to_self"), py::arg("mode") = DiagonalMode::kMaskOut);
  m.def(
      "oracle_diff", [](std::uint64_t seed) { return oracle_diff(random_oracle_case(seed)); },
      py::arg("seed"));

  py::class_<GradReport>(m, "GradReport")
      .def_readonly("passed", &GradReport::pass)
      .def_readonly("tolerance", &GradReport::tolerance)
      .def_property_readonly("max_rel_err", &GradReport::max_rel_err)
      .def("summary_line", &GradReport::summary_line)
      .def("__str__", [](const GradReport& r) {
        std::ostringstream os;
        r.print(os);
        return os.str();
      });
  m.def("check_all_gradients", &check_all_gradients, py::arg("config"), py::arg("n"),
        py::arg("seed"), py::arg("step") = kGradCheckStep, py::arg("tol") = kGradCheckTolerance);

  m.def(
      "encode_weights",
      [](const py::dict& d) { return py::bytes(encode_weights(from_dict(d))); },
      py::arg("tensors"));
  m.def(
      "decode_weights",
      [](const py::bytes& b) { return to_dict(decode_weights(std::string(b))); },
      py::arg("data"));
  m.def(
      "save_weights",
      [](const std::string& path, const py::dict& d) { save_weights(path, from_dict(d)); },
      py::arg("path"), py::arg("tensors"));
  m.def(
      "load_weights", [](const std::string& path) { return to_dict(load_weights(path)); },
      py::arg("path"));

  py::class_<RunConfig>(m, "RunConfig")
      .def_readonly("n", &RunConfig::n)
      .def_readonly("op", &RunConfig::op)
      .def_readonly("k_classes", &RunConfig::k_classes)
      .def_readonly("seed", &RunConfig::seed)
      .def_readonly("learning_rate", &RunConfig::learning_rate)
      .def_readonly("momentum", &RunConfig::momentum)
      .def_readonly("weight_decay", &RunConfig::weight_decay)
      .def_readonly("steps", &RunConfig::steps)
      .def_readonly("scenes_per_step", &RunConfig::scenes_per_step);
  m.def("parse_config", &parse_config, py::arg("text"));

  m.def(
      "cli_main",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli_main(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line tool in-process; returns (code, stdout, stderr).");
}
