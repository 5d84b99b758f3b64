#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <stdexcept>
#include <string>

#include "dmls2r/bench.hpp"
#include "dmls2r/checkpoint.hpp"
#include "dmls2r/dataio.hpp"
#include "dmls2r/dml.hpp"
#include "dmls2r/rng.hpp"
#include "dmls2r/siamese.hpp"
#include "dmls2r/trainer.hpp"

namespace py = pybind11;
using namespace dmls2r;

namespace {

std::string weighting_tag(NegativeWeighting w) {
  return w == NegativeWeighting::Paper ? "paper" : "rll";
}

NegativeWeighting weighting_from_tag(const std::string& tag) {
  if (tag == "paper") return NegativeWeighting::Paper;
  if (tag == "rll") return NegativeWeighting::Rll;
  throw std::invalid_argument("unknown negative weighting: " + tag);
}

std::string semantics_tag(EpochSemantics s) {
  return s == EpochSemantics::TotalEpochs ? "total" : "cycles";
}

EpochSemantics semantics_from_tag(const std::string& tag) {
  if (tag == "total") return EpochSemantics::TotalEpochs;
  if (tag == "cycles") return EpochSemantics::Cycles;
  throw std::invalid_argument("unknown epoch semantics: " + tag);
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

Dataset load_dataset(const std::filesystem::path& csv,
                     const std::filesystem::path& schema_path) {
  const DatasetSchema schema = load_schema(schema_path);
  Dataset ds = load_csv(csv, schema);
  if (schema.has_sentinel) ds = clean_sentinels(ds, schema.sentinel);
  return ds;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deep metric learning for semi-supervised regression";

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](const Eigen::MatrixXd& features,
                       const Eigen::VectorXd& targets,
                       const std::string& name) {
             Dataset d;
             d.features = features;
             d.targets = targets;
             d.name = name;
             for (int j = 0; j < d.feature_count(); ++j) {
               d.feature_names.push_back("f" + std::to_string(j));
             }
             d.validate();
             return d;
           }),
           py::arg("features"), py::arg("targets"),
           py::arg("name") = "dataset")
      .def_readwrite("name", &Dataset::name)
      .def_readwrite("features", &Dataset::features)
      .def_readwrite("targets", &Dataset::targets)
      .def_readonly("feature_names", &Dataset::feature_names)
      .def_readonly("target_name", &Dataset::target_name)
      .def_property_readonly("sample_count", &Dataset::sample_count)
      .def_property_readonly("feature_count", &Dataset::feature_count);

  m.def("load_dataset", &load_dataset, py::arg("csv"), py::arg("schema"),
        "Load a CSV through its schema, dropping sentinel rows if declared.");

  py::class_<NormParams>(m, "NormParams")
      .def_readonly("minimum", &NormParams::minimum)
      .def_readonly("maximum", &NormParams::maximum);

  m.def("fit_minmax",
        py::overload_cast<const Dataset&>(&fit_minmax), py::arg("dataset"));
  m.def("fit_minmax",
        py::overload_cast<const Dataset&, const std::vector<int>&>(&fit_minmax),
        py::arg("dataset"), py::arg("rows"));
  m.def("apply_minmax", &apply_minmax, py::arg("dataset"), py::arg("params"));

  py::class_<ExperimentSplit>(m, "ExperimentSplit")
      .def_readonly("labeled_idx", &ExperimentSplit::labeled_idx)
      .def_readonly("unlabeled_idx", &ExperimentSplit::unlabeled_idx)
      .def_readonly("test_idx", &ExperimentSplit::test_idx)
      .def_readonly("seed", &ExperimentSplit::seed);

  m.def("make_split", &make_split, py::arg("dataset"), py::arg("n_labeled"),
        py::arg("n_unlabeled"), py::arg("seed"));

  py::class_<RLLConfig>(m, "RLLConfig")
      .def(py::init<>())
      .def_readwrite("tau", &RLLConfig::tau)
      .def_readwrite("alpha", &RLLConfig::alpha)
      .def_readwrite("margin", &RLLConfig::margin)
      .def_readwrite("k", &RLLConfig::k)
      .def_readwrite("signed_selection", &RLLConfig::signed_selection)
      .def_readwrite("normalize_embeddings", &RLLConfig::normalize_embeddings)
      .def_property(
          "negative_weighting",
          [](const RLLConfig& c) { return weighting_tag(c.negative_weighting); },
          [](RLLConfig& c, const std::string& tag) {
            c.negative_weighting = weighting_from_tag(tag);
          });

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("cycles", &TrainConfig::cycles)
      .def_readwrite("psm_batch_size", &TrainConfig::psm_batch_size)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("rll", &TrainConfig::rll)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("step1_only", &TrainConfig::step1_only)
      .def_readwrite("separate_optimizers", &TrainConfig::separate_optimizers)
      .def_readwrite("plateau_stop", &TrainConfig::plateau_stop)
      .def_readwrite("plateau_rel_change", &TrainConfig::plateau_rel_change)
      .def_readwrite("plateau_window", &TrainConfig::plateau_window)
      .def_readwrite("checkpoint_path", &TrainConfig::checkpoint_path)
      .def_property(
          "epoch_semantics",
          [](const TrainConfig& c) { return semantics_tag(c.epoch_semantics); },
          [](TrainConfig& c, const std::string& tag) {
            c.epoch_semantics = semantics_from_tag(tag);
          });

  py::class_<TrainHistory>(m, "TrainHistory")
      .def_readonly("psm_loss", &TrainHistory::psm_loss)
      .def_readonly("rll_loss", &TrainHistory::rll_loss)
      .def_readonly("cycle_seconds", &TrainHistory::cycle_seconds);

  py::class_<SiameseModel>(m, "SiameseModel")
      .def_property_readonly("input_dim", &SiameseModel::input_dim)
      .def_property_readonly("embed_dim", &SiameseModel::embed_dim)
      .def("embed",
           [](const SiameseModel& m_, const Eigen::MatrixXd& batch) {
             return embed(m_, batch);
           },
           py::arg("batch"))
      .def("pair_forward",
           [](const SiameseModel& m_, const Eigen::MatrixXd& xi,
              const Eigen::MatrixXd& xj) { return pair_forward(m_, xi, xj); },
           py::arg("xi"), py::arg("xj"))
      .def("to_json", [](const SiameseModel& m_) {
        return siamese_to_json(m_).dump();
      })
      .def_static("from_json", [](const std::string& text) {
        return siamese_from_json(nlohmann::json::parse(text));
      });

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("model", &TrainResult::model)
      .def_readonly("history", &TrainResult::history);

  m.def("alternate_train", &alternate_train, py::arg("dataset"),
        py::arg("split"), py::arg("config"),
        "Alternate pairwise regression and metric epochs over one split.");

  m.def("predict", &predict, py::arg("model"), py::arg("x_star"),
        py::arg("labeled_x"), py::arg("labeled_y"),
        "Ensemble of symmetrized pair differences over the labeled set.");
  m.def("predict_batch", &predict_batch, py::arg("model"), py::arg("queries"),
        py::arg("labeled_x"), py::arg("labeled_y"));

  m.def("mae", &mae, py::arg("predictions"), py::arg("truth"));
  m.def("knn_predict", &knn_predict, py::arg("train_x"), py::arg("train_y"),
        py::arg("queries"), py::arg("k") = 3);

  py::class_<BenchConfig>(m, "BenchConfig")
      .def(py::init<>())
      .def_readwrite("train", &BenchConfig::train)
      .def_readwrite("n_unlabeled", &BenchConfig::n_unlabeled)
      .def_readwrite("normalize_train_only", &BenchConfig::normalize_train_only)
      .def_readwrite("knn_k", &BenchConfig::knn_k);

  m.def("run_experiment",
        [](const Dataset& d, int n_labeled, std::uint64_t seed,
           const std::string& method, const BenchConfig& cfg) {
          const RunReport r =
              run_experiment(d, n_labeled, seed, method_from_tag(method), cfg);
          return json_to_py(report_to_json(r));
        },
        py::arg("dataset"), py::arg("n_labeled"), py::arg("seed"),
        py::arg("method"), py::arg("config") = BenchConfig{},
        "One (dataset, |S|, seed, method) cell; returns the report as a dict.");

  m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("tag"),
        py::arg("index") = 0);
}
