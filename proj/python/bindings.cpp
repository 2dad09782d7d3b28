// Copyright (c) 2026 The moelora Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "moelora/checkpoint.hpp"
#include "moelora/config.hpp"
#include "moelora/errors.hpp"
#include "moelora/metrics.hpp"
#include "moelora/trainer.hpp"

namespace py = pybind11;
using namespace moelora;

namespace {

py::array_t<double> to_numpy(const Tensor& t) {
  py::array_t<double> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor frames_from(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 2) throw DimensionError("frames must be a 2-D array [T x d_in]");
  return Tensor::from_data({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))},
                           std::vector<double>(a.data(), a.data() + a.size()));
}

std::string as_text(const py::handle& v) {
  if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
  return py::str(v).cast<std::string>();
}

RunConfig run_config(const py::dict& overrides) {
  RunConfig cfg;
  for (const auto& [k, v] : overrides) cfg.set(py::str(k).cast<std::string>(), as_text(v));
  cfg.validate();
  return cfg;
}

py::dict clip_dict(const Clip& c) {
  py::dict d;
  d["id"] = c.id;
  d["split"] = std::string(split_name(c.split));
  d["family"] = c.family;
  d["label"] = c.label;
  d["frames"] = to_numpy(c.frames);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MoE-LoRA spoofing-detection toolkit";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("config_echo", [](const py::dict& overrides) { return run_config(overrides).echo(); },
        py::arg("overrides") = py::dict(), "Resolved run config as key = value text.");

  m.def(
      "count_params",
      [](const std::string& adapter, std::size_t experts, std::size_t rank, const std::string& mode) {
        BackboneConfig c;
        c.adapter_mode = parse_adapter_mode(adapter);
        c.num_experts = experts;
        c.top_k = experts;
        c.lora_rank = rank;
        const auto r = count_params(c, parse_count_mode(mode));
        py::dict d;
        d["experts"] = r.experts;
        d["routers"] = r.routers;
        d["head"] = r.head;
        d["total"] = r.total;
        d["total_text"] = format_millions(r.total);
        return d;
      },
      py::arg("adapter") = "moe_lora", py::arg("experts") = 3, py::arg("rank") = 8, py::arg("mode") = "paper");

  m.def(
      "compute_eer",
      [](const std::vector<double>& bona, const std::vector<double>& spoof) {
        const auto r = compute_eer(bona, spoof);
        return py::make_tuple(r.eer, r.threshold);
      },
      py::arg("bonafide"), py::arg("spoof"), "(eer, threshold); higher scores mean bonafide.");

  m.def(
      "det_points",
      [](const std::vector<double>& bona, const std::vector<double>& spoof) {
        std::vector<std::tuple<double, double, double>> out;
        for (const auto& p : det_points(bona, spoof)) out.emplace_back(p.threshold, p.far, p.frr);
        return out;
      },
      py::arg("bonafide"), py::arg("spoof"), "List of (threshold, far, frr).");

  m.def(
      "gen_clip",
      [](const std::string& family, std::size_t T, std::uint64_t seed) {
        Rng rng(seed);
        return to_numpy(gen_clip(family, T, rng).frames);
      },
      py::arg("family"), py::arg("frames"), py::arg("seed"));

  m.def(
      "generate_corpus",
      [](std::uint64_t seed, double scale) {
        const Dataset data = generate_corpus(CorpusManifest::defaults(seed).scaled(scale));
        py::list out;
        for (const auto& c : data.clips) out.append(clip_dict(c));
        return out;
      },
      py::arg("seed") = 1, py::arg("scale") = 1.0, "Clips as dicts with id, split, family, label and frames.");

  m.def(
      "write_corpus",
      [](const std::filesystem::path& out, std::uint64_t seed, double scale) {
        return gen_dataset(CorpusManifest::defaults(seed).scaled(scale), out).clips.size();
      },
      py::arg("out"), py::arg("seed") = 1, py::arg("scale") = 1.0);

  m.def(
      "load_corpus",
      [](const std::filesystem::path& dir) {
        py::list out;
        for (const auto& c : load_dataset(dir).clips) out.append(clip_dict(c));
        return out;
      },
      py::arg("dir"));

  m.def(
      "grad_check",
      [](const py::dict& overrides, std::uint64_t seed) { return model_grad_check(run_config(overrides).backbone, seed).max_rel_error; },
      py::arg("overrides") = py::dict(), py::arg("seed") = 1, "Max relative error of the full-model gradient.");

  py::class_<Model>(m, "Model")
      .def(py::init([](const py::dict& overrides) {
             const RunConfig cfg = run_config(overrides);
             return Model(cfg.backbone, cfg.backbone_seed, cfg.train.seed);
           }),
           py::arg("overrides") = py::dict())
      .def_static(
          "load", [](const std::filesystem::path& path) { return restore(load_checkpoint(path)); }, py::arg("path"))
      .def(
          "save", [](const Model& model, const std::filesystem::path& path) { save_checkpoint(snapshot(model), path); },
          py::arg("path"))
      .def(
          "score", [](const Model& model, py::array_t<double> frames) { return model.score(frames_from(frames)); },
          py::arg("frames"), "Bonafide score: logit difference, higher means bonafide.")
      .def_property_readonly("num_trainable", &Model::num_trainable)
      .def_property_readonly("trainable_names",
                             [](const Model& model) {
                               std::vector<std::string> names;
                               for (const auto& nt : model.trainable()) names.push_back(nt.name);
                               return names;
                             })
      .def("expert_sigma",
           [](const Model& model) {
             std::vector<std::tuple<std::string, std::size_t, std::size_t, double>> out;
             for (const auto& e : expert_svd_map(model)) out.emplace_back(e.site, e.layer, e.expert, e.sigma_max);
             return out;
           },
           "List of (site, layer, expert, sigma_max).")
      .def(
          "fit",
          [](Model& model, const std::filesystem::path& data_dir, const py::dict& overrides) {
            const RunConfig cfg = run_config(overrides);
            const Dataset data = load_dataset(data_dir);
            FitResult r;
            {
              py::gil_scoped_release release;
              r = fit(model, data, cfg.train);
            }
            py::list log;
            for (const auto& e : r.log) {
              py::dict d;
              d["epoch"] = e.epoch;
              d["train_loss"] = e.train_loss;
              d["dev_eer"] = e.dev_eer;
              d["lr"] = e.lr;
              log.append(d);
            }
            py::dict out;
            out["best_epoch"] = r.best.epoch;
            out["best_dev_eer"] = r.best.dev_eer;
            out["epochs_run"] = r.epochs_run;
            out["early_stopped"] = r.early_stopped;
            out["log"] = log;
            return out;
          },
          py::arg("data_dir"), py::arg("overrides") = py::dict(),
          "Train adapters and head with early stopping; the model keeps the best epoch's weights.");
}
