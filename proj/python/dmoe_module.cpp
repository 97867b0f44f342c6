/* Copyright 2026 The D-MoE Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dmoe/config.hpp"
#include "dmoe/gradcheck.hpp"
#include "dmoe/persistence.hpp"
#include "dmoe/trainer.hpp"

namespace py = pybind11;
using namespace dmoe;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& a) {
  if (a.ndim() == 1) {
    return Matrix(static_cast<std::size_t>(a.shape(0)), 1,
                  std::vector<double>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() != 2) throw py::value_error("expected a 1-D or 2-D array");
  return Matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::span<const double> as_span(const DoubleArray& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

std::span<const std::uint8_t> as_span(const LabelArray& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

py::tuple pair_result(const PairLoss& r) {
  return py::make_tuple(r.value, to_array(r.grad_p), to_array(r.grad_q));
}

py::dict cec_dict(const CorrelationReport& r) {
  py::list pairs;
  for (const auto& p : r.pairs) pairs.append(py::make_tuple(p.m1, p.m2, p.cec));
  py::dict d;
  d["pairs"] = pairs;
  d["sum"] = r.sum;
  d["mean"] = r.mean();
  return d;
}

py::dict epoch_dict(const EpochRecord& e) {
  py::dict d;
  d["epoch"] = e.epoch;
  d["train_logloss"] = e.train_logloss;
  d["train_objective"] = e.train_objective;
  d["valid_auc"] = e.valid_auc;
  d["valid_logloss"] = e.valid_logloss;
  d["valid_cec"] = cec_dict(e.valid_cec);
  d["seconds"] = e.seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_dmoe, m) {
  m.doc() = "Mixture-of-experts CTR models with cross-expert de-correlation";

  py::register_exception<Error>(m, "DmoeError", PyExc_RuntimeError);

  py::class_<EncodedDataset>(m, "Dataset")
      .def("__len__", &EncodedDataset::size)
      .def_property_readonly("num_fields", &EncodedDataset::num_fields)
      .def_property_readonly("indices", [](const EncodedDataset& ds) {
        py::array_t<std::uint32_t> out({ds.size(), ds.num_fields()});
        std::copy(ds.indices().begin(), ds.indices().end(), out.mutable_data());
        return out;
      })
      .def_property_readonly("labels", [](const EncodedDataset& ds) {
        py::array_t<std::uint8_t> out(ds.size());
        std::copy(ds.labels().begin(), ds.labels().end(), out.mutable_data());
        return out;
      })
      .def("save", [](const EncodedDataset& ds, const std::filesystem::path& p) { save_table(p, ds); });

  py::class_<RunConfig>(m, "RunConfig")
      .def_property_readonly("learning_rate", [](const RunConfig& c) { return c.train.adam.learning_rate; })
      .def_property_readonly("batch_size", [](const RunConfig& c) { return c.train.batch_size; })
      .def_property_readonly("epochs", [](const RunConfig& c) { return c.train.epochs; })
      .def_property_readonly("tower_hidden", [](const RunConfig& c) { return c.model.tower_hidden; })
      .def_property_readonly("gate_hidden", [](const RunConfig& c) { return c.model.gate_hidden; })
      .def_property_readonly("alpha", [](const RunConfig& c) { return c.model.loss.alpha; })
      .def_property_readonly("model_text", [](const RunConfig& c) { return model_config_to_text(c.model); });

  py::class_<ModelBundle>(m, "Model")
      .def_property_readonly("parameter_count", &ModelBundle::parameter_count)
      .def_property_readonly("num_experts", [](const ModelBundle& b) { return b.config.experts.size(); })
      .def_property_readonly("config_text", [](const ModelBundle& b) { return model_config_to_text(b.config); })
      .def("__eq__", [](const ModelBundle& a, const ModelBundle& b) { return a == b; });

  m.def("fnv1a_64", [](const std::string& s) { return fnv1a_64(s); });
  m.def("hash_token", [](const std::string& s, std::uint64_t card) { return hash_token(s, card); },
        py::arg("token"), py::arg("cardinality"));

  m.def("pearson_matrix", [](const DoubleArray& x, const DoubleArray& y) {
    return to_array(pearson_matrix(to_matrix(x), to_matrix(y)));
  });
  m.def("cec", [](const DoubleArray& x, const DoubleArray& y) { return cec(to_matrix(x), to_matrix(y)); });
  m.def("auc", [](const DoubleArray& s, const LabelArray& y) { return auc(as_span(s), as_span(y)); },
        py::arg("scores"), py::arg("labels"));

  m.def("corr_loss", [](const DoubleArray& p, const DoubleArray& q) {
    return pair_result(corr_loss_pair(to_matrix(p), to_matrix(q)));
  });
  m.def("cov_loss", [](const DoubleArray& p, const DoubleArray& q, const std::string& norm) {
    if (norm != "l1" && norm != "l2") throw py::value_error("norm must be 'l1' or 'l2'");
    return pair_result(cov_loss_pair(to_matrix(p), to_matrix(q), norm == "l1" ? CovNorm::L1 : CovNorm::L2));
  }, py::arg("p"), py::arg("q"), py::arg("norm") = "l2");
  m.def("total_objective", [](double bce_value, double decor, double alpha, std::size_t batch) {
    return total_objective(bce_value, decor, alpha, batch);
  }, py::arg("bce"), py::arg("decor"), py::arg("alpha"), py::arg("batch_size"));

  m.def("gen_synthetic", [](std::size_t fields, std::size_t cardinality, std::size_t dim_u, std::size_t rows,
                            std::uint64_t seed, double bias, double signal, double u_mean, double v_mean) {
    SyntheticSpec s;
    s.fields = fields;
    s.cardinality = cardinality;
    s.dim_u = dim_u;
    s.rows = rows;
    s.seed = seed;
    s.bias = bias;
    s.signal = signal;
    s.u_mean = u_mean;
    s.v_mean = v_mean;
    return gen_synthetic(s).data;
  }, py::arg("fields") = 6, py::arg("cardinality") = 100, py::arg("dim_u") = 4, py::arg("rows") = 50000,
     py::arg("seed") = 1, py::arg("bias") = 0.0, py::arg("signal") = 1.0, py::arg("u_mean") = 0.2,
     py::arg("v_mean") = 0.3);

  m.def("split_dataset", [](const EncodedDataset& ds, double train, double valid, double test, std::uint64_t seed) {
    auto s = split_dataset(ds, {train, valid, test}, seed);
    return py::make_tuple(std::move(s.train), std::move(s.valid), std::move(s.test));
  }, py::arg("dataset"), py::arg("train") = 0.8, py::arg("valid") = 0.1, py::arg("test") = 0.1,
     py::arg("seed") = 2024);

  m.def("load_table", [](const std::filesystem::path& p, const ModelBundle& model) {
    return load_table(p, model.config.schema);
  });
  m.def("load_table", [](const std::filesystem::path& p, const RunConfig& rc) {
    return load_table(p, rc.model.schema);
  });

  m.def("load_run_config", [](const std::filesystem::path& p) { return load_run_config(p); });
  m.def("parse_run_config", [](const std::string& text) { return parse_run_config(parse_key_values(text)); });
  m.def("build_model", [](const RunConfig& rc) { return build_model(rc.model); });

  m.def("train", [](ModelBundle& model, const EncodedDataset& train, const EncodedDataset& valid,
                    const RunConfig& rc, const std::function<void(py::dict)>& on_epoch) {
    TrainReport report;
    {
      EpochCallback cb;
      if (on_epoch) {
        cb = [&on_epoch](const EpochRecord& e) {
          py::gil_scoped_acquire gil;
          on_epoch(epoch_dict(e));
        };
      }
      py::gil_scoped_release release;
      report = train_loop(model, train, valid, rc.train, cb);
    }
    py::list epochs;
    for (const auto& e : report.epochs) epochs.append(epoch_dict(e));
    py::dict d;
    d["epochs"] = epochs;
    d["best_epoch"] = report.best_epoch;
    d["best_valid_auc"] = report.best_valid_auc;
    return d;
  }, py::arg("model"), py::arg("train"), py::arg("valid"), py::arg("config"), py::arg("on_epoch") = nullptr);

  m.def("evaluate", [](const ModelBundle& model, const EncodedDataset& ds, std::size_t batch, std::size_t rows) {
    Evaluation ev;
    {
      py::gil_scoped_release release;
      ev = evaluate(model, ds, batch, rows);
    }
    py::dict d;
    d["auc"] = ev.metrics.auc;
    d["logloss"] = ev.metrics.logloss;
    d["samples"] = ev.metrics.samples;
    d["cec"] = cec_dict(ev.cec);
    return d;
  }, py::arg("model"), py::arg("dataset"), py::arg("batch_size") = 10000, py::arg("cec_rows") = 100000);

  m.def("predict", [](const ModelBundle& model, const EncodedDataset& ds, std::size_t batch) {
    return to_array(predict(model, ds, batch));
  }, py::arg("model"), py::arg("dataset"), py::arg("batch_size") = 10000);

  m.def("save_model", [](const ModelBundle& model, const std::filesystem::path& p) { save_model(p, model); });
  m.def("load_model", [](const std::filesystem::path& p) { return load_model(p); });

  m.def("gradcheck", [](std::size_t batch, std::uint64_t seed, double tol) {
    MicroSpec spec;
    spec.batch = batch;
    spec.seed = seed;
    spec.tol = tol;
    const auto suite = run_gradcheck_suite(spec);
    py::list out;
    for (const auto& c : suite.cases) {
      out.append(py::make_tuple(c.name, c.result.passed, c.result.max_relative_error));
    }
    return out;
  }, py::arg("batch") = 6, py::arg("seed") = 7, py::arg("tol") = 1e-4);
}
