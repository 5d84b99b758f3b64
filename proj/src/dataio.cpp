#include "dmls2r/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "dmls2r/rng.hpp"

namespace dmls2r {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  for (const std::string& item : split(value, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

double parse_date_cell(std::string cell, const std::string& where) {
  cell = trim(cell);
  int day = 0, month = 0, year = 0, used = 0;
  if (std::sscanf(cell.c_str(), "%d/%d/%d%n", &day, &month, &year, &used) !=
          3 ||
      used != static_cast<int>(cell.size())) {
    throw std::runtime_error(where + ": expected DD/MM/YYYY, got '" + cell +
                             "'");
  }
  const std::chrono::year_month_day ymd{
      std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
      std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) {
    throw std::runtime_error(where + ": invalid calendar date '" + cell + "'");
  }
  return static_cast<double>(
      std::chrono::sys_days{ymd}.time_since_epoch().count());
}

double parse_time_cell(std::string cell, const std::string& where) {
  cell = trim(cell);
  int hour = 0, minute = 0, second = 0, used = 0;
  if (std::sscanf(cell.c_str(), "%d.%d.%d%n", &hour, &minute, &second,
                  &used) != 3 ||
      used != static_cast<int>(cell.size()) || hour < 0 || hour > 23 ||
      minute < 0 || minute > 59 || second < 0 || second > 59) {
    throw std::runtime_error(where + ": expected HH.MM.SS, got '" + cell +
                             "'");
  }
  return hour + minute / 60.0 + second / 3600.0;
}

double parse_double(std::string cell, bool decimal_comma,
                    const std::string& where) {
  cell = trim(cell);
  if (decimal_comma) std::replace(cell.begin(), cell.end(), ',', '.');
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw std::runtime_error(where + ": cannot parse number '" + cell + "'");
  return value;
}

bool parse_bool(const std::string& value, const std::string& where) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::runtime_error(where + ": expected a boolean, got '" + value + "'");
}

int parse_int(const std::string& value, const std::string& where) {
  int out = 0;
  const auto [ptr, ec] =
      std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw std::runtime_error(where + ": expected an integer, got '" + value +
                             "'");
  return out;
}

std::string shortest_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() != targets.size())
    throw std::invalid_argument("dataset: feature rows and targets disagree");
  if (static_cast<std::size_t>(features.cols()) != feature_names.size())
    throw std::invalid_argument("dataset: feature names and columns disagree");
  if (!features.allFinite() || !targets.allFinite())
    throw std::invalid_argument("dataset: non-finite values present");
}

DatasetSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());

  DatasetSchema s;
  s.name = path.stem().string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const std::string where =
        path.string() + ":" + std::to_string(lineno);
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(where + ": expected key = value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));

    if (key == "name") {
      s.name = value;
    } else if (key == "target") {
      s.target = value;
    } else if (key == "features") {
      if (value != "auto") s.features = split_list(value);
    } else if (key == "drop") {
      s.drop = split_list(value);
    } else if (key == "date_columns") {
      s.date_columns = split_list(value);
    } else if (key == "time_columns") {
      s.time_columns = split_list(value);
    } else if (key == "sentinel") {
      s.has_sentinel = true;
      s.sentinel = parse_double(value, false, where);
    } else if (key == "separator") {
      if (value.size() != 1)
        throw std::runtime_error(where + ": separator must be one character");
      s.separator = value[0];
    } else if (key == "decimal_comma") {
      s.decimal_comma = parse_bool(value, where);
    } else if (key == "expected_features") {
      s.expected_features = parse_int(value, where);
    } else if (key == "unlabeled") {
      s.unlabeled = parse_int(value, where);
    } else {
      throw std::runtime_error(where + ": unknown key '" + key + "'");
    }
  }
  if (s.target.empty())
    throw std::runtime_error(path.string() + ": schema names no target column");
  return s;
}

Dataset load_csv(const std::filesystem::path& path,
                 const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path.string() + ": no rows");
  std::vector<std::string> header = split(line, schema.separator);
  for (std::string& h : header) h = trim(h);

  const std::unordered_set<std::string> dropped(schema.drop.begin(),
                                                schema.drop.end());
  const auto is_dropped = [&](std::size_t c) {
    return header[c].empty() || dropped.count(header[c]) > 0;
  };

  int target_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == schema.target) target_col = static_cast<int>(c);
  if (target_col < 0)
    throw std::runtime_error(path.string() + ": target column '" +
                             schema.target + "' not found");

  std::vector<int> feature_cols;
  if (schema.features.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (static_cast<int>(c) != target_col && !is_dropped(c))
        feature_cols.push_back(static_cast<int>(c));
  } else {
    for (const std::string& name : schema.features) {
      int found = -1;
      for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == name) found = static_cast<int>(c);
      if (found < 0)
        throw std::runtime_error(path.string() + ": feature column '" + name +
                                 "' not found");
      feature_cols.push_back(found);
    }
  }
  if (schema.expected_features >= 0 &&
      static_cast<int>(feature_cols.size()) != schema.expected_features)
    throw std::runtime_error(
        path.string() + ": schema expects " +
        std::to_string(schema.expected_features) + " features, file has " +
        std::to_string(feature_cols.size()));

  enum class CellKind { Number, Date, Time };
  const std::unordered_set<std::string> date_set(schema.date_columns.begin(),
                                                 schema.date_columns.end());
  const std::unordered_set<std::string> time_set(schema.time_columns.begin(),
                                                 schema.time_columns.end());
  std::vector<CellKind> kinds;
  for (int c : feature_cols) {
    const std::string& name = header[static_cast<std::size_t>(c)];
    if (date_set.count(name)) {
      kinds.push_back(CellKind::Date);
    } else if (time_set.count(name)) {
      kinds.push_back(CellKind::Time);
    } else {
      kinds.push_back(CellKind::Number);
    }
  }

  std::vector<double> values;
  std::vector<double> targets;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line, schema.separator);
    if (cells.size() != header.size())
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": has " + std::to_string(cells.size()) +
                               " columns, header has " +
                               std::to_string(header.size()));
    const std::string where = path.string() + ":" + std::to_string(lineno);
    for (std::size_t i = 0; i < feature_cols.size(); ++i) {
      const std::string& cell =
          cells[static_cast<std::size_t>(feature_cols[i])];
      switch (kinds[i]) {
        case CellKind::Date:
          values.push_back(parse_date_cell(cell, where));
          break;
        case CellKind::Time:
          values.push_back(parse_time_cell(cell, where));
          break;
        case CellKind::Number:
          values.push_back(parse_double(cell, schema.decimal_comma, where));
          break;
      }
    }
    targets.push_back(parse_double(cells[static_cast<std::size_t>(target_col)],
                                   schema.decimal_comma, where));
  }
  if (targets.empty()) throw std::runtime_error(path.string() + ": no rows");

  Dataset d;
  d.name = schema.name;
  d.target_name = schema.target;
  for (int c : feature_cols)
    d.feature_names.push_back(header[static_cast<std::size_t>(c)]);
  const Eigen::Index rows = static_cast<Eigen::Index>(targets.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(feature_cols.size());
  d.features.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      d.features(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  d.targets =
      Eigen::Map<const Eigen::VectorXd>(targets.data(), rows);
  d.validate();
  return d;
}

void save_dataset_csv(const std::filesystem::path& path, const Dataset& d) {
  d.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open for writing: " + path.string());
  for (const std::string& name : d.feature_names) out << name << ',';
  out << d.target_name << '\n';
  for (Eigen::Index r = 0; r < d.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < d.features.cols(); ++c)
      out << shortest_double(d.features(r, c)) << ',';
    out << shortest_double(d.targets[r]) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Dataset clean_sentinels(const Dataset& d, double sentinel) {
  std::vector<int> keep;
  for (Eigen::Index r = 0; r < d.features.rows(); ++r) {
    bool hit = d.targets[r] == sentinel;
    for (Eigen::Index c = 0; !hit && c < d.features.cols(); ++c)
      hit = d.features(r, c) == sentinel;
    if (!hit) keep.push_back(static_cast<int>(r));
  }
  if (keep.empty())
    throw std::runtime_error("cleaning removed every row of " + d.name);
  return select_rows(d, keep);
}

void NormParams::validate() const {
  if (minimum.size() != maximum.size())
    throw std::invalid_argument("norm: min/max length mismatch");
  for (Eigen::Index j = 0; j < minimum.size(); ++j)
    if (maximum[j] < minimum[j])
      throw std::invalid_argument("norm: maximum below minimum");
}

NormParams fit_minmax(const Dataset& d) {
  if (d.sample_count() == 0)
    throw std::invalid_argument("fit_minmax: empty dataset");
  NormParams p;
  p.minimum = d.features.colwise().minCoeff();
  p.maximum = d.features.colwise().maxCoeff();
  return p;
}

NormParams fit_minmax(const Dataset& d, const std::vector<int>& rows) {
  return fit_minmax(select_rows(d, rows));
}

Dataset apply_minmax(const Dataset& d, const NormParams& p) {
  p.validate();
  if (p.minimum.size() != d.features.cols())
    throw std::invalid_argument("apply_minmax: schema mismatch");
  Dataset out = d;
  for (Eigen::Index j = 0; j < d.features.cols(); ++j) {
    if (p.is_constant(static_cast<int>(j))) {
      out.features.col(j).setZero();
    } else {
      out.features.col(j) =
          (d.features.col(j).array() - p.minimum[j]) /
          (p.maximum[j] - p.minimum[j]);
    }
  }
  return out;
}

nlohmann::json norm_to_json(const NormParams& p) {
  p.validate();
  nlohmann::json j;
  j["format"] = "norm-v1";
  j["minimum"] = std::vector<double>(p.minimum.begin(), p.minimum.end());
  j["maximum"] = std::vector<double>(p.maximum.begin(), p.maximum.end());
  return j;
}

NormParams norm_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "norm-v1")
    throw std::runtime_error("expected a norm-v1 document");
  const auto mins = j.at("minimum").get<std::vector<double>>();
  const auto maxs = j.at("maximum").get<std::vector<double>>();
  NormParams p;
  p.minimum = Eigen::Map<const Eigen::VectorXd>(
      mins.data(), static_cast<Eigen::Index>(mins.size()));
  p.maximum = Eigen::Map<const Eigen::VectorXd>(
      maxs.data(), static_cast<Eigen::Index>(maxs.size()));
  p.validate();
  return p;
}

void ExperimentSplit::validate(int n_samples) const {
  std::vector<char> seen(static_cast<std::size_t>(n_samples), 0);
  int total = 0;
  for (const std::vector<int>* part :
       {&labeled_idx, &unlabeled_idx, &test_idx}) {
    for (int i : *part) {
      if (i < 0 || i >= n_samples)
        throw std::invalid_argument("split: index out of range");
      if (seen[static_cast<std::size_t>(i)]++)
        throw std::invalid_argument("split: index appears twice");
      ++total;
    }
  }
  if (total != n_samples)
    throw std::invalid_argument("split: partition does not cover the dataset");
}

ExperimentSplit make_split(const Dataset& d, int n_labeled, int n_unlabeled,
                           std::uint64_t seed) {
  const int n = d.sample_count();
  if (n_labeled < 1 || n_unlabeled < 1)
    throw std::invalid_argument("split: counts must be positive");
  if (n_labeled + n_unlabeled > n)
    throw std::invalid_argument("split: labeled + unlabeled exceeds dataset");
  if (n_labeled >= n_unlabeled)
    throw std::invalid_argument(
        "split: labeled count must be below unlabeled count");

  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);

  ExperimentSplit s;
  s.seed = seed;
  s.labeled_idx.assign(perm.begin(), perm.begin() + n_labeled);
  s.unlabeled_idx.assign(perm.begin() + n_labeled,
                         perm.begin() + n_labeled + n_unlabeled);
  s.test_idx.assign(perm.begin() + n_labeled + n_unlabeled, perm.end());
  s.validate(n);
  return s;
}

nlohmann::json split_to_json(const ExperimentSplit& s) {
  nlohmann::json j;
  j["format"] = "split-v1";
  j["seed"] = s.seed;
  j["labeled"] = s.labeled_idx;
  j["unlabeled"] = s.unlabeled_idx;
  j["test"] = s.test_idx;
  return j;
}

ExperimentSplit split_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "split-v1")
    throw std::runtime_error("expected a split-v1 document");
  ExperimentSplit s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.labeled_idx = j.at("labeled").get<std::vector<int>>();
  s.unlabeled_idx = j.at("unlabeled").get<std::vector<int>>();
  s.test_idx = j.at("test").get<std::vector<int>>();
  return s;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m,
                            const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= m.rows())
      throw std::out_of_range("gather: row index out of range");
    out.row(static_cast<Eigen::Index>(r)) = m.row(idx[r]);
  }
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= v.size())
      throw std::out_of_range("gather: index out of range");
    out[static_cast<Eigen::Index>(r)] = v[idx[r]];
  }
  return out;
}

Dataset select_rows(const Dataset& d, const std::vector<int>& idx) {
  Dataset out = d;
  out.features = gather_rows(d.features, idx);
  out.targets = gather(d.targets, idx);
  return out;
}

}  // namespace dmls2r
