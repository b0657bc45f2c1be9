#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "selftime/augment.hpp"
#include "selftime/checkpoint.hpp"
#include "selftime/cli.hpp"
#include "selftime/config.hpp"
#include "selftime/dataset.hpp"
#include "selftime/errors.hpp"
#include "selftime/pipeline.hpp"
#include "selftime/relation.hpp"
#include "selftime/synthetic.hpp"

namespace py = pybind11;
using namespace selftime;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

data::TimeSeriesDataset dataset_from_array(const Array& values, std::optional<std::vector<int>> labels,
                                           const std::string& name) {
  if (values.ndim() != 2) throw InvalidArgument("values must be a 2-d array (series x time)");
  const auto rows = static_cast<std::size_t>(values.shape(0)), length = static_cast<std::size_t>(values.shape(1));
  std::vector<double> flat(values.data(), values.data() + rows * length);
  return data::from_rows(std::move(flat), length, labels.value_or(std::vector<int>{}), name);
}

Array values_array(const data::TimeSeriesDataset& ds) {
  Array out({ds.size(), ds.length});
  std::copy(ds.values.begin(), ds.values.end(), out.mutable_data());
  return out;
}

TrainConfig config_from(const py::kwargs& kwargs) {
  TrainConfig cfg;
  for (const auto& [k, v] : kwargs) {
    auto value = py::str(v).cast<std::string>();
    if (py::isinstance<py::bool_>(v)) value = v.cast<bool>() ? "true" : "false";
    apply_setting(cfg, k.cast<std::string>(), value);
  }
  cfg.validate();
  return cfg;
}

py::dict report_dict(const pipeline::EvalReport& r) {
  py::dict d;
  d["method"] = r.method;
  d["accuracies"] = r.accuracies;
  d["mean"] = r.mean;
  d["std"] = r.std;
  d["split_seeds"] = r.split_seeds;
  d["trial_count"] = r.trial_count;
  d["pretext_steps"] = r.pretext_steps;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Self-supervised time series representation learning (C++ core)";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  auto data_error = py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  (void)data_error;

  m.def("temporal_label", &relation::temporal_label, py::arg("length"), py::arg("classes"), py::arg("u"), py::arg("v"));
  m.def("label_histogram", &relation::label_histogram, py::arg("length"), py::arg("classes"), py::arg("piece_length"));

  m.def("augment_kinds", &augment::step_kinds);
  m.def(
      "augment",
      [](const std::vector<double>& series, const std::string& kind, std::uint64_t seed,
         const std::map<std::string, std::string>& params) {
        auto step = augment::make_step(kind);
        for (const auto& [k, v] : params) apply_step_setting(step, k, v);
        augment::AugmentationPolicy{{step}}.validate();
        auto rng = augment::view_stream(seed, 0, 0, 0);
        return augment::apply_step(series, step, rng);
      },
      py::arg("series"), py::arg("kind"), py::arg("seed") = 0,
      py::arg("params") = std::map<std::string, std::string>{},
      "Applies one augmentation to a series; parameters as in the config file sections.");

  py::class_<data::TimeSeriesDataset>(m, "Dataset")
      .def(py::init(&dataset_from_array), py::arg("values"), py::arg("labels") = py::none(), py::arg("name") = "")
      .def_property_readonly("values", &values_array)
      .def_readonly("labels", &data::TimeSeriesDataset::labels)
      .def_readonly("label_map", &data::TimeSeriesDataset::label_map)
      .def_readonly("name", &data::TimeSeriesDataset::name)
      .def_readonly("length", &data::TimeSeriesDataset::length)
      .def_readonly("normalized", &data::TimeSeriesDataset::normalized)
      .def("__len__", &data::TimeSeriesDataset::size)
      .def("without_labels", &data::TimeSeriesDataset::without_labels)
      .def("znormalize", [](const data::TimeSeriesDataset& ds) { return data::znormalize(ds); });

  m.def(
      "load_ucr",
      [](const std::vector<std::filesystem::path>& paths, bool labeled, bool interpolate) {
        data::LoadOptions opt;
        opt.labeled = labeled;
        opt.missing = interpolate ? data::MissingValues::interpolate : data::MissingValues::reject;
        return data::load_ucr(paths, opt);
      },
      py::arg("paths"), py::arg("labeled") = true, py::arg("interpolate") = false);
  m.def(
      "make_waveforms",
      [](std::size_t count, std::size_t length, std::uint64_t seed) {
        data::WaveformOptions o;
        o.count = count;
        o.length = length;
        o.seed = seed;
        return data::make_waveforms(o);
      },
      py::arg("count") = 240, py::arg("length") = 128, py::arg("seed") = 0);

  py::class_<io::ModelCheckpoint>(m, "Checkpoint")
      .def_readonly("metadata", &io::ModelCheckpoint::metadata)
      .def_property_readonly("names",
                             [](const io::ModelCheckpoint& c) {
                               std::vector<std::string> names;
                               for (const auto& e : c.entries) names.push_back(e.name);
                               return names;
                             })
      .def("hash", &io::checkpoint_hash)
      .def("save", [](const io::ModelCheckpoint& c, const std::filesystem::path& p) { io::save_checkpoint(c, p); })
      .def("__eq__", [](const io::ModelCheckpoint& a, const io::ModelCheckpoint& b) { return a == b; });
  m.def("load_checkpoint", &io::load_checkpoint, py::arg("path"));

  m.def(
      "default_config", [](const py::kwargs& kw) { return format_config(config_from(kw)); },
      "Config text for the defaults overridden by keyword arguments.");

  m.def(
      "pretrain",
      [](const data::TimeSeriesDataset& ds, const py::kwargs& kw) {
        const auto cfg = config_from(kw);
        py::gil_scoped_release release;
        auto r = pipeline::pretrain(ds.without_labels(), cfg);
        std::vector<std::map<std::string, double>> log;
        for (const auto& e : r.log)
          log.push_back({{"epoch", e.epoch},
                         {"loss_inter", e.loss_inter},
                         {"loss_intra", e.loss_intra},
                         {"loss_total", e.loss_total},
                         {"inter_acc", e.inter_acc},
                         {"class_acc", e.class_acc}});
        return std::make_pair(std::move(r.checkpoint), std::move(log));
      },
      py::arg("dataset"), "Returns (checkpoint, epoch log). Keyword arguments are config keys.");
  m.def(
      "linear_eval",
      [](const io::ModelCheckpoint& ckpt, const data::TimeSeriesDataset& ds, const py::kwargs& kw) {
        const auto cfg = config_from(kw);
        pipeline::EvalReport r;
        {
          py::gil_scoped_release release;
          r = pipeline::linear_eval(ckpt, ds, cfg, cfg.trials);
        }
        return report_dict(r);
      },
      py::arg("checkpoint"), py::arg("dataset"));
  m.def(
      "random_baseline",
      [](const data::TimeSeriesDataset& ds, const py::kwargs& kw) {
        const auto cfg = config_from(kw);
        pipeline::EvalReport r;
        {
          py::gil_scoped_release release;
          r = pipeline::baseline_random_weights(ds, cfg);
        }
        return report_dict(r);
      },
      py::arg("dataset"));
  m.def(
      "embed",
      [](const io::ModelCheckpoint& ckpt, const data::TimeSeriesDataset& ds) {
        auto encoder = pipeline::load_encoder(ckpt);
        const auto f = pipeline::encode_dataset(encoder, ds);
        py::array_t<float> out({ds.size(), static_cast<std::size_t>(model::kEmbeddingDim)});
        std::copy(f.begin(), f.end(), out.mutable_data());
        return out;
      },
      py::arg("checkpoint"), py::arg("dataset"), "Eval-mode embeddings, N x 64.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::dispatch(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI command; returns (exit code, stdout text, stderr text).");
}
