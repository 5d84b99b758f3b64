#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "dmls2r/dataio.hpp"
#include "dmls2r/trainer.hpp"

namespace dmls2r {

enum class Method { DmlS2r, Step1Only, KnnRaw };

std::string method_tag(Method m);
Method method_from_tag(const std::string& tag);

double mae(const Eigen::VectorXd& predictions, const Eigen::VectorXd& truth);

// Plumbing baseline: k-nearest-neighbour mean over the labeled set with
// Euclidean distance on (normalized) features. Ties break on lower index.
Eigen::VectorXd knn_predict(const Eigen::MatrixXd& train_x,
                            const Eigen::VectorXd& train_y,
                            const Eigen::MatrixXd& query, int k = 3);

// Median of the finite entries; NaN when none are finite.
double median(std::vector<double> values);

struct BenchConfig {
  TrainConfig train;  // train.seed and train.step1_only are set per run
  int n_unlabeled = 1000;
  bool normalize_train_only = false;
  int knn_k = 3;
};

struct RunReport {
  std::string dataset;
  int n_labeled = 0;
  std::uint64_t seed = 0;
  std::string method;
  double test_mae = 0.0;
  TrainHistory history;  // empty for knn-raw
  nlohmann::json config;
};

nlohmann::json report_to_json(const RunReport& r);
RunReport report_from_json(const nlohmann::json& j);

// One full experiment: derive the split from the seed, normalize, train (or
// fit the baseline), evaluate MAE over the whole test partition. Expects a
// cleaned dataset in raw units; normalization happens here so the train-only
// mode can fit on the labeled and unlabeled rows alone.
RunReport run_experiment(const Dataset& data, int n_labeled,
                         std::uint64_t seed, Method method,
                         const BenchConfig& cfg);

struct TableEntry {
  std::string method;
  int n_labeled = 0;
  std::vector<double> per_seed_mae;  // NaN marks a failed cell
  double median_mae = 0.0;
  double spread = 0.0;  // half the range of the finite per-seed values
};

struct BenchTable {
  std::string dataset;
  std::vector<int> sizes;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> methods;
  std::vector<TableEntry> entries;
  nlohmann::json reference;  // method tag -> { "<size>": mae }, may be null
  std::vector<std::string> warnings;
  int failed_cells = 0;
};

// Runs every (size, method, seed) combination serially and aggregates
// medians. When out_dir is non-empty, per-run reports are written to
// out_dir/<dataset>/<method>/<size>/<seed>.json and the aggregate to
// out_dir/<dataset>/table.{csv,json}. A failed cell is recorded as NaN plus
// a warning instead of aborting the table.
BenchTable run_table(const Dataset& data, const std::vector<int>& sizes,
                     const std::vector<std::uint64_t>& seeds,
                     const std::vector<Method>& methods,
                     const BenchConfig& cfg,
                     const nlohmann::json& reference = nullptr,
                     const std::filesystem::path& out_dir = {});

std::string table_to_csv(const BenchTable& t);
nlohmann::json table_to_json(const BenchTable& t);

// Reads a reference-mae-v1 file and returns its "values" object.
nlohmann::json load_reference_values(const std::filesystem::path& path);

}  // namespace dmls2r
