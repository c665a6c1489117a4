// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "gta/analysis.hpp"
#include "gta/attention.hpp"
#include "gta/data.hpp"
#include "gta/error.hpp"
#include "gta/model.hpp"
#include "gta/ops.hpp"
#include "gta/train.hpp"

namespace py = pybind11;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

gta::Tensor to_tensor(const DoubleArray& a) {
  std::vector<std::size_t> shape(static_cast<std::size_t>(a.ndim()));
  for (py::ssize_t i = 0; i < a.ndim(); ++i) {
    shape[static_cast<std::size_t>(i)] = static_cast<std::size_t>(a.shape(i));
  }
  gta::Tensor t(shape);
  std::memcpy(t.data(), a.data(), sizeof(double) * t.size());
  return t;
}

py::array_t<double> to_array(const gta::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().size());
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    shape[i] = static_cast<py::ssize_t>(t.shape()[i]);
  }
  py::array_t<double> a(shape);
  std::memcpy(a.mutable_data(), t.data(), sizeof(double) * t.size());
  return a;
}

gta::ModelSpec make_spec(const std::string& blocks, std::size_t t, std::size_t h,
                         std::size_t w, std::size_t cin, std::size_t patch,
                         std::size_t channels, std::size_t classes, bool norm,
                         bool stem_bias, std::uint64_t seed) {
  gta::ModelSpec ms;
  ms.t = t;
  ms.h = h;
  ms.w = w;
  ms.c_in = cin;
  ms.patch = patch;
  ms.channels = channels;
  ms.classes = classes;
  ms.norm = norm;
  ms.stem_bias = stem_bias;
  ms.seed = seed;
  ms.blocks = gta::parse_block_plan(blocks);
  ms.validate();
  return ms;
}

gta::VideoDataset dataset_from_arrays(const DoubleArray& videos,
                                      const std::vector<std::size_t>& labels,
                                      std::size_t classes) {
  if (videos.ndim() != 5) {
    throw gta::DimensionError("videos must be rank 5: (N, T, H, W, c)");
  }
  const auto n = static_cast<std::size_t>(videos.shape(0));
  if (labels.size() != n) {
    throw gta::DimensionError("label count does not match video count");
  }
  gta::VideoDataset ds;
  ds.task = "external";
  ds.t = static_cast<std::size_t>(videos.shape(1));
  ds.h = static_cast<std::size_t>(videos.shape(2));
  ds.w = static_cast<std::size_t>(videos.shape(3));
  ds.classes = classes;
  ds.seed = 0;
  const std::size_t per = videos.size() / (n == 0 ? 1 : n);
  for (std::size_t i = 0; i < n; ++i) {
    gta::VideoSample s;
    s.frames = gta::Tensor({ds.t, ds.h, ds.w,
                            static_cast<std::size_t>(videos.shape(4))});
    std::memcpy(s.frames.data(), videos.data() + i * per, sizeof(double) * per);
    s.label = labels[i];
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Temporal attention blocks for video (joint, decoupled, and global "
      "temporal attention with grouped channel-wise multi-head time mixing), "
      "with deterministic training, analytic cost accounting, and binary "
      "dataset/checkpoint containers.";

  auto base = py::register_exception<gta::Error>(m, "Error");
  py::register_exception<gta::DimensionError>(m, "DimensionError", base);
  py::register_exception<gta::ConfigError>(m, "ConfigError", base);
  py::register_exception<gta::ContractError>(m, "ContractError", base);
  py::register_exception<gta::NumericError>(m, "NumericError", base);
  py::register_exception<gta::IoError>(m, "IoError", base);
  auto fmt_err = py::register_exception<gta::FormatError>(m, "FormatError", base);
  py::register_exception<gta::IntegrityError>(m, "IntegrityError", fmt_err);

  m.def(
      "softmax",
      [](const DoubleArray& x) { return to_array(gta::softmax_last(to_tensor(x))); },
      py::arg("x"), "Row-wise softmax over the last axis.");

  m.def(
      "matmul",
      [](const DoubleArray& a, const DoubleArray& b) {
        return to_array(gta::matmul(to_tensor(a), to_tensor(b)));
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "attention",
      [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& v) {
        gta::AttentionOutput out =
            gta::scaled_dot_attention(to_tensor(q), to_tensor(k), to_tensor(v));
        return py::make_tuple(to_array(out.output), to_array(out.weights));
      },
      py::arg("q"), py::arg("k"), py::arg("v"),
      "softmax(q k^T / sqrt(C)) v over the last two axes; returns "
      "(output, weights).");

  m.def(
      "ccmh_mix",
      [](const DoubleArray& v, const DoubleArray& bank) {
        return to_array(gta::ccmh_mix(to_tensor(v), to_tensor(bank)));
      },
      py::arg("v"), py::arg("bank"),
      "Grouped channel-wise multi-head time mixing: v (..., T, C) with bank "
      "(G, N_h, T, T).");

  m.def(
      "patchify",
      [](const DoubleArray& x, std::size_t p) {
        return to_array(gta::patchify(to_tensor(x), p));
      },
      py::arg("x"), py::arg("p"),
      "(B, T, H, W, c) -> (B, T, (H/p)*(W/p), p*p*c).");

  m.def(
      "generate_task",
      [](const std::string& task, std::size_t n, std::size_t t, std::size_t h,
         std::size_t w, std::uint64_t seed) {
        const gta::VideoDataset ds = gta::generate_task(task, n, t, h, w, seed);
        std::vector<py::ssize_t> shape = {
            static_cast<py::ssize_t>(ds.size()), static_cast<py::ssize_t>(t),
            static_cast<py::ssize_t>(h), static_cast<py::ssize_t>(w), 1};
        py::array_t<double> videos(shape);
        py::array_t<std::int64_t> labels(static_cast<py::ssize_t>(ds.size()));
        double* vptr = static_cast<double*>(videos.request().ptr);
        std::int64_t* lptr = static_cast<std::int64_t*>(labels.request().ptr);
        const std::size_t per = t * h * w;
        for (std::size_t i = 0; i < ds.size(); ++i) {
          std::memcpy(vptr + i * per, ds.samples[i].frames.data(),
                      sizeof(double) * per);
          lptr[i] = static_cast<std::int64_t>(ds.samples[i].label);
        }
        return py::make_tuple(videos, labels);
      },
      py::arg("task"), py::arg("n"), py::arg("t") = 8, py::arg("h") = 16,
      py::arg("w") = 16, py::arg("seed") = 1,
      "Synthetic task generator ('directional-dot' or 'reveal-cover'); "
      "returns (videos, labels).");

  m.def(
      "flops_csv",
      [](const std::string& blocks, std::size_t t, std::size_t h, std::size_t w,
         std::size_t c, const std::string& convention) {
        gta::CostConvention conv;
        if (convention == "runtime") {
          conv = gta::CostConvention::Runtime;
        } else if (convention == "paper") {
          conv = gta::CostConvention::Paper;
        } else {
          throw gta::ConfigError("convention must be runtime or paper");
        }
        return gta::report_plan(gta::parse_block_plan(blocks), t, h, w, c, conv)
            .to_csv();
      },
      py::arg("blocks"), py::arg("t"), py::arg("h"), py::arg("w"), py::arg("c"),
      py::arg("convention") = "runtime",
      "Analytic flop/parameter accounting for a block plan, as CSV text.");

  m.def("reference_stack_csv",
        []() { return gta::report_reference_stack().to_csv(); },
        "Cost rows for the published-figure five-block comparison stack.");

  py::class_<gta::Model>(m, "Model")
      .def(py::init([](const std::string& blocks, std::size_t t, std::size_t h,
                       std::size_t w, std::size_t cin, std::size_t patch,
                       std::size_t channels, std::size_t classes, bool norm,
                       bool stem_bias, std::uint64_t seed) {
             return gta::Model(make_spec(blocks, t, h, w, cin, patch, channels,
                                         classes, norm, stem_bias, seed));
           }),
           py::arg("blocks") = "", py::arg("t") = 8, py::arg("h") = 16,
           py::arg("w") = 16, py::arg("cin") = 1, py::arg("patch") = 4,
           py::arg("channels") = 24, py::arg("classes") = 2,
           py::arg("norm") = false, py::arg("stem_bias") = true,
           py::arg("seed") = 1)
      .def(
          "forward",
          [](gta::Model& self, const DoubleArray& video) {
            return to_array(self.forward(to_tensor(video), nullptr));
          },
          py::arg("video"), "video (B, T, H, W, cin) -> logits (B, classes).")
      .def("param_names",
           [](const gta::Model& self) {
             std::vector<std::string> names;
             for (const gta::Parameter* p : self.params()) {
               names.push_back(p->name());
             }
             return names;
           })
      .def(
          "get_parameter",
          [](const gta::Model& self, const std::string& name) {
            const gta::Parameter* p = self.find_param(name);
            if (!p) throw gta::ConfigError("unknown parameter '" + name + "'");
            return to_array(p->value());
          },
          py::arg("name"))
      .def(
          "set_parameter",
          [](gta::Model& self, const std::string& name, const DoubleArray& value) {
            gta::Parameter* p = self.find_param(name);
            if (!p) throw gta::ConfigError("unknown parameter '" + name + "'");
            gta::Tensor t = to_tensor(value);
            if (t.shape() != p->value().shape()) {
              throw gta::DimensionError("set_parameter('" + name +
                                        "'): shape mismatch");
            }
            p->value() = std::move(t);
          },
          py::arg("name"), py::arg("value"))
      .def("save", [](const gta::Model& self,
                      const std::string& path) { self.save_checkpoint(path); },
           py::arg("path"))
      .def_static("load", &gta::Model::load_checkpoint, py::arg("path"))
      .def_property_readonly(
          "blocks",
          [](const gta::Model& self) {
            return gta::format_block_plan(self.spec().blocks);
          })
      .def_property_readonly("spec", [](const gta::Model& self) {
        py::dict d;
        for (const auto& [k, v] : self.spec().to_kv()) {
          d[py::str(k)] = py::str(v);
        }
        return d;
      });

  m.def(
      "evaluate",
      [](gta::Model& model, const DoubleArray& videos,
         const std::vector<std::size_t>& labels, std::size_t batch) {
        const gta::VideoDataset ds =
            dataset_from_arrays(videos, labels, model.spec().classes);
        const gta::EvalResult r = gta::evaluate(model, ds, batch);
        return py::make_tuple(r.loss, r.accuracy);
      },
      py::arg("model"), py::arg("videos"), py::arg("labels"),
      py::arg("batch") = 32, "Mean loss and accuracy; returns (loss, accuracy).");
}
