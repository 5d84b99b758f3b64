#include "dmls2r/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "dmls2r/checkpoint.hpp"
#include "dmls2r/rng.hpp"

namespace dmls2r {

namespace {

nlohmann::json history_to_json(const TrainHistory& h) {
  return nlohmann::json{{"psm_loss", h.psm_loss},
                        {"rll_loss", h.rll_loss},
                        {"cycle_seconds", h.cycle_seconds}};
}

TrainHistory history_from_json(const nlohmann::json& j) {
  TrainHistory h;
  h.psm_loss = j.at("psm_loss").get<std::vector<double>>();
  h.rll_loss = j.at("rll_loss").get<std::vector<double>>();
  if (j.contains("cycle_seconds")) {
    h.cycle_seconds = j.at("cycle_seconds").get<std::vector<double>>();
  }
  return h;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream out;
  out << std::setprecision(6) << v;
  return out.str();
}

std::vector<int> train_rows(const ExperimentSplit& split) {
  std::vector<int> rows = split.labeled_idx;
  rows.insert(rows.end(), split.unlabeled_idx.begin(),
              split.unlabeled_idx.end());
  return rows;
}

}  // namespace

std::string method_tag(Method m) {
  switch (m) {
    case Method::DmlS2r: return "dml-s2r";
    case Method::Step1Only: return "step1-only";
    case Method::KnnRaw: return "knn-raw";
  }
  throw std::invalid_argument("unknown method");
}

Method method_from_tag(const std::string& tag) {
  if (tag == "dml-s2r") return Method::DmlS2r;
  if (tag == "step1-only") return Method::Step1Only;
  if (tag == "knn-raw") return Method::KnnRaw;
  throw std::invalid_argument("unknown method tag: " + tag);
}

double mae(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truth) {
  if (predictions.size() != truth.size()) {
    throw std::invalid_argument("mae: length mismatch");
  }
  if (predictions.size() == 0) {
    throw std::invalid_argument("mae: empty input");
  }
  return (predictions - truth).cwiseAbs().mean();
}

Eigen::VectorXd knn_predict(const Eigen::MatrixXd& train_x,
                            const Eigen::VectorXd& train_y,
                            const Eigen::MatrixXd& query, int k) {
  const Eigen::Index n = train_x.rows();
  if (train_y.size() != n) {
    throw std::invalid_argument("knn_predict: features and targets disagree");
  }
  if (k < 1 || k > n) {
    throw std::invalid_argument("knn_predict: k out of range");
  }
  if (query.cols() != train_x.cols()) {
    throw std::invalid_argument("knn_predict: feature width mismatch");
  }

  Eigen::VectorXd out(query.rows());
  std::vector<std::pair<double, Eigen::Index>> order(n);
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    for (Eigen::Index i = 0; i < n; ++i) {
      order[i] = {(train_x.row(i) - query.row(q)).norm(), i};
    }
    std::partial_sort(order.begin(), order.begin() + k, order.end());
    double acc = 0.0;
    for (int j = 0; j < k; ++j) acc += train_y(order[j].second);
    out(q) = acc / k;
  }
  return out;
}

double median(std::vector<double> values) {
  std::vector<double> finite;
  finite.reserve(values.size());
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  if (finite.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(finite.begin(), finite.end());
  const std::size_t n = finite.size();
  if (n % 2 == 1) return finite[n / 2];
  return (finite[n / 2 - 1] + finite[n / 2]) / 2.0;
}

nlohmann::json report_to_json(const RunReport& r) {
  return nlohmann::json{{"format", "report-v1"},
                        {"dataset", r.dataset},
                        {"n_labeled", r.n_labeled},
                        {"seeds", std::vector<std::uint64_t>{r.seed}},
                        {"method", r.method},
                        {"test_mae", r.test_mae},
                        {"per_seed_mae", std::vector<double>{r.test_mae}},
                        {"history", history_to_json(r.history)},
                        {"config", r.config},
                        {"versions",
                         {{"report", "report-v1"},
                          {"model", "siamese-v1"},
                          {"optimizer", "adam-v1"},
                          {"train_checkpoint", "train-v1"}}}};
}

RunReport report_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "report-v1") {
    throw std::runtime_error("expected a report-v1 document");
  }
  RunReport r;
  r.dataset = j.at("dataset").get<std::string>();
  r.n_labeled = j.at("n_labeled").get<int>();
  const auto seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  const auto per_seed = j.at("per_seed_mae").get<std::vector<double>>();
  if (seeds.size() != 1 || per_seed.size() != 1) {
    throw std::runtime_error("run report must carry exactly one seed");
  }
  r.seed = seeds[0];
  r.method = j.at("method").get<std::string>();
  r.test_mae = j.at("test_mae").get<double>();
  r.history = history_from_json(j.at("history"));
  r.config = j.at("config");
  return r;
}

RunReport run_experiment(const Dataset& data, int n_labeled,
                         std::uint64_t seed, Method method,
                         const BenchConfig& cfg) {
  data.validate();
  const ExperimentSplit split =
      make_split(data, n_labeled, cfg.n_unlabeled, derive_seed(seed, "split"));

  const NormParams norm = cfg.normalize_train_only
                              ? fit_minmax(data, train_rows(split))
                              : fit_minmax(data);
  const Dataset work = apply_minmax(data, norm);

  const Eigen::MatrixXd labeled_x =
      gather_rows(work.features, split.labeled_idx);
  const Eigen::VectorXd labeled_y = gather(work.targets, split.labeled_idx);
  const Eigen::MatrixXd test_x = gather_rows(work.features, split.test_idx);
  const Eigen::VectorXd test_y = gather(work.targets, split.test_idx);

  RunReport report;
  report.dataset = work.name;
  report.n_labeled = n_labeled;
  report.seed = seed;
  report.method = method_tag(method);

  Eigen::VectorXd preds;
  if (method == Method::KnnRaw) {
    preds = knn_predict(labeled_x, labeled_y, test_x, cfg.knn_k);
    report.config = nlohmann::json{{"knn_k", cfg.knn_k}};
  } else {
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = derive_seed(seed, "train");
    train_cfg.step1_only = (method == Method::Step1Only);
    TrainResult result = alternate_train(work, split, train_cfg);
    preds = predict_batch(result.model, test_x, labeled_x, labeled_y);
    report.history = std::move(result.history);
    report.config = train_config_to_json(train_cfg);
  }
  report.config["n_unlabeled"] = cfg.n_unlabeled;
  report.config["normalize_train_only"] = cfg.normalize_train_only;
  report.test_mae = mae(preds, test_y);
  return report;
}

BenchTable run_table(const Dataset& data, const std::vector<int>& sizes,
                     const std::vector<std::uint64_t>& seeds,
                     const std::vector<Method>& methods,
                     const BenchConfig& cfg, const nlohmann::json& reference,
                     const std::filesystem::path& out_dir) {
  if (sizes.empty()) throw std::invalid_argument("run_table: no sizes");
  if (seeds.empty()) throw std::invalid_argument("run_table: no seeds");
  if (methods.empty()) throw std::invalid_argument("run_table: no methods");

  BenchTable table;
  table.dataset = data.name;
  table.sizes = sizes;
  table.seeds = seeds;
  for (Method m : methods) table.methods.push_back(method_tag(m));
  table.reference = reference;

  for (Method m : methods) {
    for (int size : sizes) {
      TableEntry entry;
      entry.method = method_tag(m);
      entry.n_labeled = size;
      for (std::uint64_t seed : seeds) {
        double value = std::numeric_limits<double>::quiet_NaN();
        try {
          const RunReport report = run_experiment(data, size, seed, m, cfg);
          value = report.test_mae;
          if (!out_dir.empty()) {
            const std::filesystem::path run_path =
                out_dir / table.dataset / entry.method /
                std::to_string(size) / (std::to_string(seed) + ".json");
            std::filesystem::create_directories(run_path.parent_path());
            write_json_file(run_path, report_to_json(report));
          }
        } catch (const std::exception& e) {
          table.failed_cells += 1;
          table.warnings.push_back("cell failed (" + entry.method +
                                   ", |S|=" + std::to_string(size) +
                                   ", seed " + std::to_string(seed) +
                                   "): " + e.what());
        }
        entry.per_seed_mae.push_back(value);
      }
      std::vector<double> finite;
      for (double v : entry.per_seed_mae) {
        if (std::isfinite(v)) finite.push_back(v);
      }
      entry.median_mae = median(entry.per_seed_mae);
      if (finite.size() > 1) {
        const auto [lo, hi] = std::minmax_element(finite.begin(), finite.end());
        entry.spread = (*hi - *lo) / 2.0;
      }
      table.entries.push_back(std::move(entry));
    }
  }

  // Soft check: medians should not grow with more labeled data. One
  // inversion is tolerated downstream; every one is flagged here.
  for (const std::string& tag : table.methods) {
    std::vector<std::pair<int, double>> medians;
    for (const TableEntry& e : table.entries) {
      if (e.method == tag && std::isfinite(e.median_mae)) {
        medians.emplace_back(e.n_labeled, e.median_mae);
      }
    }
    std::sort(medians.begin(), medians.end());
    for (std::size_t i = 1; i < medians.size(); ++i) {
      if (medians[i].second > medians[i - 1].second) {
        table.warnings.push_back(
            "median MAE inversion for " + tag + ": |S|=" +
            std::to_string(medians[i].first) + " (" + fmt(medians[i].second) +
            ") exceeds |S|=" + std::to_string(medians[i - 1].first) + " (" +
            fmt(medians[i - 1].second) + ")");
      }
    }
  }

  if (!out_dir.empty()) {
    const std::filesystem::path base = out_dir / table.dataset;
    std::filesystem::create_directories(base);
    std::ofstream csv(base / "table.csv", std::ios::binary);
    csv << table_to_csv(table);
    write_json_file(base / "table.json", table_to_json(table));
  }
  return table;
}

std::string table_to_csv(const BenchTable& t) {
  std::ostringstream out;
  out << "method";
  for (int size : t.sizes) out << ",|S|=" << size;
  out << "\n";
  for (const std::string& tag : t.methods) {
    out << tag;
    for (int size : t.sizes) {
      for (const TableEntry& e : t.entries) {
        if (e.method == tag && e.n_labeled == size) {
          out << "," << fmt(e.median_mae);
          if (e.per_seed_mae.size() > 1 && std::isfinite(e.median_mae)) {
            out << " +/- " << fmt(e.spread);
          }
        }
      }
    }
    out << "\n";
  }
  if (t.reference.is_object()) {
    for (const std::string& tag : t.methods) {
      if (!t.reference.contains(tag)) continue;
      const nlohmann::json& row = t.reference.at(tag);
      out << "reference (" << tag << ")";
      for (int size : t.sizes) {
        const std::string key = std::to_string(size);
        out << ",";
        if (row.contains(key)) out << fmt(row.at(key).get<double>());
      }
      out << "\n";
    }
  }
  return out.str();
}

nlohmann::json table_to_json(const BenchTable& t) {
  nlohmann::json cells = nlohmann::json::array();
  for (const TableEntry& e : t.entries) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (double v : e.per_seed_mae) {
      if (std::isfinite(v)) {
        per_seed.push_back(v);
      } else {
        per_seed.push_back(nullptr);
      }
    }
    cells.push_back({{"method", e.method},
                     {"n_labeled", e.n_labeled},
                     {"per_seed_mae", per_seed},
                     {"median_mae", std::isfinite(e.median_mae)
                                        ? nlohmann::json(e.median_mae)
                                        : nlohmann::json(nullptr)},
                     {"spread", e.spread}});
  }
  return nlohmann::json{{"format", "bench-table-v1"},
                        {"dataset", t.dataset},
                        {"sizes", t.sizes},
                        {"seeds", t.seeds},
                        {"methods", t.methods},
                        {"cells", cells},
                        {"reference", t.reference},
                        {"warnings", t.warnings},
                        {"failed_cells", t.failed_cells}};
}

nlohmann::json load_reference_values(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path);
  if (!j.is_object() || j.value("format", "") != "reference-mae-v1") {
    throw std::runtime_error("expected a reference-mae-v1 file: " +
                             path.string());
  }
  return j.at("values");
}

}  // namespace dmls2r
