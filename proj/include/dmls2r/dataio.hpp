#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

namespace dmls2r {

struct Dataset {
  std::string name;
  Eigen::MatrixXd features;
  Eigen::VectorXd targets;  // raw physical units throughout
  std::vector<std::string> feature_names;
  std::string target_name = "target";

  int sample_count() const { return static_cast<int>(features.rows()); }
  int feature_count() const { return static_cast<int>(features.cols()); }
  void validate() const;
};

// Key=value descriptor for one CSV source. Lines are `key = value`; blank
// lines and # comments are ignored. Recognized keys: name, target, features
// (comma list or `auto`), drop (comma list), sentinel, separator,
// decimal_comma, expected_features, unlabeled.
struct DatasetSchema {
  std::string name;
  std::string target;
  std::vector<std::string> features;  // empty = every non-target column
  std::vector<std::string> drop;
  // Columns holding DD/MM/YYYY dates or HH.MM.SS clock times; both are
  // converted to numbers (day serials, fractional hours) so they can join
  // the feature matrix.
  std::vector<std::string> date_columns;
  std::vector<std::string> time_columns;
  bool has_sentinel = false;
  double sentinel = 0.0;
  char separator = ',';
  bool decimal_comma = false;
  int expected_features = -1;  // -1 skips the count check
  int unlabeled = -1;          // benchmark pool size; -1 = caller decides
};

DatasetSchema load_schema(const std::filesystem::path& path);

// Header row required. Columns with empty header names are dropped (trailing
// separators in some exports produce them), as are columns listed in
// schema.drop.
Dataset load_csv(const std::filesystem::path& path,
                 const DatasetSchema& schema);

void save_dataset_csv(const std::filesystem::path& path, const Dataset& d);

// Drops every row where any feature or the target equals the sentinel
// exactly. Throws if nothing survives.
Dataset clean_sentinels(const Dataset& d, double sentinel);

struct NormParams {
  Eigen::VectorXd minimum;
  Eigen::VectorXd maximum;

  bool is_constant(int j) const { return maximum[j] == minimum[j]; }
  void validate() const;
};

NormParams fit_minmax(const Dataset& d);
// Fit over a row subset only (train-only normalization mode).
NormParams fit_minmax(const Dataset& d, const std::vector<int>& rows);

// x' = (x - min) / (max - min) per feature; constant features map to 0.
// Targets pass through untouched.
Dataset apply_minmax(const Dataset& d, const NormParams& p);

nlohmann::json norm_to_json(const NormParams& p);
NormParams norm_from_json(const nlohmann::json& j);

struct ExperimentSplit {
  std::vector<int> labeled_idx;
  std::vector<int> unlabeled_idx;
  std::vector<int> test_idx;
  std::uint64_t seed = 0;

  void validate(int n_samples) const;
};

// One seeded permutation sliced labeled / unlabeled / test, so growing
// n_labeled under the same seed keeps smaller labeled sets as prefixes.
ExperimentSplit make_split(const Dataset& d, int n_labeled, int n_unlabeled,
                           std::uint64_t seed);

nlohmann::json split_to_json(const ExperimentSplit& s);
ExperimentSplit split_from_json(const nlohmann::json& j);

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m,
                            const std::vector<int>& idx);
Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx);
Dataset select_rows(const Dataset& d, const std::vector<int>& idx);

}  // namespace dmls2r
