#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "protolayer/config.hpp"
#include "protolayer/conv.hpp"
#include "protolayer/data.hpp"
#include "protolayer/dissimilarity.hpp"
#include "protolayer/errors.hpp"
#include "protolayer/lvq_head.hpp"
#include "protolayer/proto_conv.hpp"
#include "protolayer/trainer.hpp"

namespace py = pybind11;
namespace pl = protolayer;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

pl::Tensor to_tensor(const Array& a) {
  pl::Shape shape(a.shape(), a.shape() + a.ndim());
  return pl::Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const pl::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Array to_array(const std::vector<double>& v) { return to_array(pl::Tensor::vector(v)); }

pl::DissimilaritySpec make_spec(const std::string& kind, const std::optional<Array>& omega,
                                const std::optional<Array>& bias, const std::string& activation) {
  pl::DissimilaritySpec s;
  s.kind = pl::parse_dissimilarity_kind(kind);
  s.activation = pl::parse_activation(activation);
  if (omega) s.omega = to_tensor(*omega);
  if (bias) s.bias = to_tensor(*bias).values();
  return s;
}

pl::Padding padding_of(const std::string& p) {
  if (p == "valid") return pl::Padding::valid;
  if (p == "same") return pl::Padding::same;
  throw pl::ArgumentError("padding must be 'valid' or 'same'");
}

py::tuple dataset_tuple(const pl::Dataset& ds) {
  pl::Shape shape{ds.size()};
  shape.insert(shape.end(), ds.sample_shape.begin(), ds.sample_shape.end());
  return py::make_tuple(to_array(ds.inputs.reshaped(shape)), py::array_t<int>(ds.labels.size(), ds.labels.data()));
}

py::dict record_dict(const pl::MetricsRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["split"] = r.split;
  d["loss"] = r.loss;
  d["accuracy"] = r.accuracy;
  d["reject_rate"] = r.reject_rate;
  d["wall_time_s"] = r.wall_time_s;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Prototype-based layers: LVQ heads and kernel-prototype convolutions";

  auto base = py::register_exception<pl::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<pl::ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<pl::ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<pl::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<pl::DataError>(m, "DataError", base.ptr());
  py::register_exception<pl::FormatError>(m, "FormatError", base.ptr());
  py::register_exception<pl::NumericError>(m, "NumericError", base.ptr());
  py::register_exception<pl::UsageError>(m, "UsageError", base.ptr());

  auto response = [](bool efficient) {
    return [efficient](const Array& x, const Array& w, const std::string& kind, const std::optional<Array>& omega,
                       const std::optional<Array>& bias, const std::string& activation) {
      const auto spec = make_spec(kind, omega, bias, activation);
      const pl::PrototypeSet protos(to_tensor(w));
      const auto xt = to_tensor(x);
      if (xt.rank() == 2) {
        return to_array(efficient ? pl::response_efficient(xt, protos, spec) : pl::response_naive(xt, protos, spec));
      }
      return to_array(efficient ? pl::response_efficient(xt.data(), protos, spec)
                                : pl::response_naive(xt.data(), protos, spec));
    };
  };
  m.def("response_efficient", response(true), py::arg("x"), py::arg("prototypes"), py::arg("kind") = "euclidean",
        py::arg("omega") = py::none(), py::arg("bias") = py::none(), py::arg("activation") = "identity",
        "Prototype response via one matrix-vector product and a dynamic bias. x is (n,) or (batch, n).");
  m.def("response_naive", response(false), py::arg("x"), py::arg("prototypes"), py::arg("kind") = "euclidean",
        py::arg("omega") = py::none(), py::arg("bias") = py::none(), py::arg("activation") = "identity");

  m.def(
      "proto_conv",
      [](const Array& image, const Array& kernels, const std::optional<Array>& radii_sq, std::pair<size_t, size_t> stride,
         const std::string& padding) {
        pl::KernelPrototypeBank bank;
        bank.kernels = to_tensor(kernels);
        if (radii_sq) bank.radii_sq = to_tensor(*radii_sq).values();
        bank.stride = {stride.first, stride.second};
        bank.padding = padding_of(padding);
        return to_array(pl::proto_conv_output(to_tensor(image), bank).values);
      },
      py::arg("image"), py::arg("kernels"), py::arg("radii_sq") = py::none(), py::arg("stride") = std::pair<size_t, size_t>{1, 1},
      py::arg("padding") = "valid",
      "Distance stack of a {rows, cols, channels} image against {N, kr, kc, channels} kernels; n-ball scores when radii are given.");

  m.def(
      "extract_windows",
      [](const Array& image, std::pair<size_t, size_t> kernel, std::pair<size_t, size_t> stride, const std::string& padding) {
        return to_array(pl::extract_windows(to_tensor(image), {kernel.first, kernel.second}, {stride.first, stride.second},
                                            padding_of(padding))
                            .rows);
      },
      py::arg("image"), py::arg("kernel"), py::arg("stride") = std::pair<size_t, size_t>{1, 1}, py::arg("padding") = "valid");

  m.def("wta", [](const Array& d) { return pl::wta(to_tensor(d).data()); }, py::arg("distances"));
  m.def(
      "glvq_loss",
      [](const Array& d, const std::vector<int>& labels, int true_class) {
        return pl::glvq_loss(to_tensor(d).data(), labels, true_class);
      },
      py::arg("distances"), py::arg("labels"), py::arg("true_class"));
  m.def(
      "rslvq_probs",
      [](const Array& d, const std::vector<int>& labels) { return to_array(pl::rslvq_probs(to_tensor(d).data(), labels)); },
      py::arg("distances"), py::arg("labels"), "Class probabilities indexed by the sorted distinct labels.");

  m.def(
      "gen_blobs",
      [](size_t n_classes, size_t n_per_class, size_t dim, double spread, uint64_t seed, uint64_t stream) {
        return dataset_tuple(pl::gen_blobs(n_classes, n_per_class, dim, spread, seed, stream));
      },
      py::arg("n_classes"), py::arg("n_per_class"), py::arg("dim"), py::arg("spread"), py::arg("seed"), py::arg("stream") = 0);
  m.def(
      "load_idx",
      [](const std::string& images, const std::string& labels, size_t limit, uint64_t seed) {
        return dataset_tuple(pl::load_idx(images, labels, limit, seed));
      },
      py::arg("images"), py::arg("labels"), py::arg("limit") = 0, py::arg("seed") = 0);

  m.def(
      "train",
      [](const std::string& config_path) {
        const auto result = pl::train_and_save(pl::load_config(config_path));
        py::list out;
        for (const auto& r : result.metrics) out.append(record_dict(r));
        return out;
      },
      py::arg("config_path"), "Runs a training config; writes outputs and returns the metrics records.");
}
