#include "dmls2r/checkpoint.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

#include "dmls2r/siamese.hpp"

namespace dmls2r {

namespace {

using nlohmann::json;

json matrix_rowmajor(const Eigen::MatrixXd& m) {
  json arr = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
  return arr;
}

Eigen::MatrixXd matrix_from(const json& arr, Eigen::Index rows,
                            Eigen::Index cols) {
  if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != rows * cols)
    throw std::runtime_error("checkpoint: weight array has wrong length");
  Eigen::MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = arr[i++].get<double>();
  return m;
}

json vector_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from(const json& arr, Eigen::Index expected) {
  if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != expected)
    throw std::runtime_error("checkpoint: vector has wrong length");
  Eigen::VectorXd v(expected);
  for (Eigen::Index i = 0; i < expected; ++i)
    v[i] = arr[static_cast<std::size_t>(i)].get<double>();
  return v;
}

json array_json(const Eigen::ArrayXd& a) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < a.size(); ++i) arr.push_back(a[i]);
  return arr;
}

Eigen::ArrayXd array_from(const json& arr) {
  if (!arr.is_array())
    throw std::runtime_error("checkpoint: expected a number array");
  Eigen::ArrayXd a(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i)
    a[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return a;
}

const char* activation_tag(Activation a) {
  return a == Activation::Rectifier ? "rectifier" : "identity";
}

Activation activation_from(const std::string& tag) {
  if (tag == "rectifier") return Activation::Rectifier;
  if (tag == "identity") return Activation::Identity;
  throw std::runtime_error("checkpoint: unknown activation tag '" + tag + "'");
}

void require_format(const json& j, const std::string& want) {
  const std::string got = j.value("format", std::string{});
  if (got != want)
    throw std::runtime_error("checkpoint: expected format '" + want +
                             "', found '" + got + "'");
}

}  // namespace

json mlp_to_json(const MlpParams& p) {
  p.validate();
  json j;
  j["format"] = "mlp-v1";
  j["layer_sizes"] = p.layer_sizes();
  json layers = json::array();
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    json layer;
    layer["activation"] = activation_tag(p.activations[l]);
    layer["weight"] = matrix_rowmajor(p.weights[l]);
    layer["bias"] = vector_json(p.biases[l]);
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j;
}

MlpParams mlp_from_json(const json& j) {
  require_format(j, "mlp-v1");
  const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
  const json& layers = j.at("layers");
  if (sizes.size() < 2 || !layers.is_array() ||
      layers.size() != sizes.size() - 1)
    throw std::runtime_error("checkpoint: layer list does not match sizes");

  MlpParams p;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const json& layer = layers[l];
    const Eigen::Index rows = sizes[l + 1];
    const Eigen::Index cols = sizes[l];
    p.weights.push_back(matrix_from(layer.at("weight"), rows, cols));
    p.biases.push_back(vector_from(layer.at("bias"), rows));
    p.activations.push_back(
        activation_from(layer.at("activation").get<std::string>()));
  }
  p.validate();
  return p;
}

json siamese_to_json(const SiameseModel& m) {
  m.validate();
  json j;
  j["format"] = "siamese-v1";
  j["subnet"] = mlp_to_json(m.subnet);
  j["head"]["weight"] = vector_json(m.head_weights);
  j["head"]["bias"] = m.head_bias;
  return j;
}

SiameseModel siamese_from_json(const json& j) {
  require_format(j, "siamese-v1");
  SiameseModel m;
  m.subnet = mlp_from_json(j.at("subnet"));
  const json& head = j.at("head");
  m.head_weights =
      vector_from(head.at("weight"), 2 * m.subnet.output_dim());
  m.head_bias = head.at("bias").get<double>();
  m.validate();
  return m;
}

json adam_to_json(const AdamState& s) {
  json j;
  j["format"] = "adam-v1";
  j["learning_rate"] = s.config.learning_rate;
  j["beta1"] = s.config.beta1;
  j["beta2"] = s.config.beta2;
  j["epsilon"] = s.config.epsilon;
  j["step_count"] = s.step_count;
  json m1 = json::array();
  json m2 = json::array();
  for (const auto& a : s.first_moment) m1.push_back(array_json(a));
  for (const auto& a : s.second_moment) m2.push_back(array_json(a));
  j["first_moment"] = std::move(m1);
  j["second_moment"] = std::move(m2);
  return j;
}

AdamState adam_from_json(const json& j) {
  require_format(j, "adam-v1");
  AdamState s;
  s.config.learning_rate = j.at("learning_rate").get<double>();
  s.config.beta1 = j.at("beta1").get<double>();
  s.config.beta2 = j.at("beta2").get<double>();
  s.config.epsilon = j.at("epsilon").get<double>();
  s.step_count = j.at("step_count").get<long>();
  for (const json& a : j.at("first_moment")) s.first_moment.push_back(array_from(a));
  for (const json& a : j.at("second_moment")) s.second_moment.push_back(array_from(a));
  if (s.first_moment.size() != s.second_moment.size())
    throw std::runtime_error("checkpoint: moment block counts differ");
  for (std::size_t b = 0; b < s.first_moment.size(); ++b)
    if (s.first_moment[b].size() != s.second_moment[b].size())
      throw std::runtime_error("checkpoint: moment block sizes differ");
  return s;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace dmls2r
