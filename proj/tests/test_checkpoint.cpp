#include <doctest.h>

#include <Eigen/Core>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "dmls2r/checkpoint.hpp"
#include "dmls2r/siamese.hpp"
#include "testutil.hpp"

using namespace dmls2r;

TEST_CASE("mlp round-trips bit-exactly through json text") {
  const MlpParams p = init_mlp({5, 7, 3}, 314);
  const nlohmann::json j = nlohmann::json::parse(mlp_to_json(p).dump());
  const MlpParams q = mlp_from_json(j);
  REQUIRE(q.layer_count() == p.layer_count());
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    CHECK(p.weights[l] == q.weights[l]);
    CHECK(p.biases[l] == q.biases[l]);
    CHECK(p.activations[l] == q.activations[l]);
  }
}

TEST_CASE("mlp json carries format tag, sizes, and activation tags") {
  const nlohmann::json j = mlp_to_json(init_mlp({4, 6, 2}, 1));
  CHECK(j.at("format") == "mlp-v1");
  CHECK(j.at("layer_sizes") == nlohmann::json({4, 6, 2}));
  CHECK(j.at("layers").size() == 2);
  CHECK(j.at("layers")[0].at("activation") == "rectifier");
  CHECK(j.at("layers")[1].at("activation") == "identity");
  CHECK(j.at("layers")[0].at("weight").size() == 24);
}

TEST_CASE("siamese round-trips bit-exactly through a file") {
  testutil::TempDir tmp("ckpt");
  const SiameseModel m = init_siamese(9, 217, 11);
  const auto path = tmp.path() / "model.json";
  write_json_file(path, siamese_to_json(m));

  const SiameseModel q = siamese_from_json(read_json_file(path));
  CHECK(q.head_weights == m.head_weights);
  CHECK(q.head_bias == m.head_bias);
  for (std::size_t l = 0; l < m.subnet.layer_count(); ++l) {
    CHECK(q.subnet.weights[l] == m.subnet.weights[l]);
    CHECK(q.subnet.biases[l] == m.subnet.biases[l]);
  }
}

TEST_CASE("siamese json is tagged with its model kind") {
  const nlohmann::json j = siamese_to_json(init_siamese(3, 5, 4));
  CHECK(j.at("format") == "siamese-v1");
  CHECK(j.at("subnet").at("format") == "mlp-v1");
}

TEST_CASE("optimizer state resumes a trajectory exactly") {
  SiameseModel live = init_siamese(3, 99, 4);
  AdamState opt = init_adam(live);
  const Eigen::MatrixXd xi = testutil::random_matrix(3, 3, 100);
  const Eigen::MatrixXd xj = testutil::random_matrix(3, 3, 101);

  const auto step = [&](SiameseModel& m, AdamState& s) {
    const PairTrace t = pair_forward_trace(m, xi, xj);
    adam_step(m, pair_backward(m, t, 2.0 * t.output), s);
  };
  for (int i = 0; i < 3; ++i) step(live, opt);

  SiameseModel restored = siamese_from_json(siamese_to_json(live));
  AdamState ropt = adam_from_json(adam_to_json(opt));
  CHECK(ropt.step_count == opt.step_count);

  for (int i = 0; i < 3; ++i) {
    step(live, opt);
    step(restored, ropt);
  }
  CHECK(restored.head_weights == live.head_weights);
  CHECK(restored.head_bias == live.head_bias);
  for (std::size_t l = 0; l < live.subnet.layer_count(); ++l)
    CHECK(restored.subnet.weights[l] == live.subnet.weights[l]);
}

TEST_CASE("loaders reject wrong or missing format tags") {
  nlohmann::json j = mlp_to_json(init_mlp({2, 3, 1}, 7));
  j["format"] = "mlp-v9";
  CHECK_THROWS_AS(mlp_from_json(j), std::runtime_error);
  CHECK_THROWS_AS(siamese_from_json(j), std::runtime_error);
  CHECK_THROWS_AS(adam_from_json(nlohmann::json::object()),
                  std::runtime_error);
}

TEST_CASE("loaders reject structurally damaged documents") {
  nlohmann::json j = mlp_to_json(init_mlp({2, 3, 1}, 7));
  j["layers"][0]["weight"].erase(0);
  CHECK_THROWS(mlp_from_json(j));
}

TEST_CASE("file io reports unreadable and malformed inputs") {
  testutil::TempDir tmp("ckpt-io");
  CHECK_THROWS_AS(read_json_file(tmp.path() / "absent.json"),
                  std::runtime_error);
  const auto bad = tmp.path() / "bad.json";
  std::ofstream(bad) << "{ not json";
  CHECK_THROWS_AS(read_json_file(bad), std::runtime_error);
}
