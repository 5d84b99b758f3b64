#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dmls2r/checkpoint.hpp"
#include "dmls2r/cli.hpp"
#include "dmls2r/dataio.hpp"
#include "testutil.hpp"

using namespace dmls2r;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(std::move(args), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Writes a small dataset plus schema and returns the two paths.
std::pair<std::string, std::string> stage_toy(const fs::path& dir) {
  Dataset ds;
  ds.name = "toy";
  ds.features = testutil::random_matrix(60, 3, 901);
  ds.targets = ds.features.rowwise().sum() +
               0.05 * testutil::random_vector(60, 902);
  ds.feature_names = {"f0", "f1", "f2"};
  const fs::path csv = dir / "toy.csv";
  const fs::path schema = dir / "toy.schema";
  save_dataset_csv(csv, ds);
  std::ofstream s(schema);
  s << "name = toy\ntarget = target\nunlabeled = 14\n";
  s.close();
  return {csv.string(), schema.string()};
}

// Pulls the config block a command printed, ready to re-feed via --config.
std::string extract_echo(const std::string& out, const std::string& name) {
  const std::string marker = "resolved configuration (" + name + "):\n";
  const auto begin = out.find(marker);
  REQUIRE(begin != std::string::npos);
  const auto body = out.substr(begin + marker.size());
  const auto end = body.find("\n\n");
  REQUIRE(end != std::string::npos);
  return body.substr(0, end + 1);
}

std::vector<std::string> quick_train(const std::string& csv,
                                     const std::string& schema,
                                     const std::string& out) {
  return {"train", "--data", csv,      "--schema", schema, "--out", out,
          "--sizes", "6",    "--seeds", "3",      "--cycles", "2",
          "--k",     "2"};
}

}  // namespace

TEST_CASE("cli usage errors exit with 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"train"}).code == 2);  // required options missing
  const CliResult missing = run({"prepare", "--data", "/nonexistent.csv",
                                 "--schema", "/nonexistent.schema", "--out",
                                 "/tmp/x"});
  CHECK(missing.code == 2);
  CHECK_FALSE(missing.err.empty());
}

TEST_CASE("cli help exits cleanly") {
  const CliResult r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("prepare") != std::string::npos);
}

TEST_CASE("prepare writes normalized data and is idempotent") {
  testutil::TempDir dir;
  const auto [csv, schema] = stage_toy(dir.path());
  const std::string out = (dir.path() / "prep").string();

  const CliResult r =
      run({"prepare", "--data", csv, "--schema", schema, "--out", out});
  CHECK(r.code == 0);
  CHECK(r.out.find("resolved configuration (prepare):") != std::string::npos);
  CHECK(r.out.find("prepared toy: 60 rows, 3 features") != std::string::npos);
  REQUIRE(fs::exists(fs::path(out) / "prepared.csv"));
  REQUIRE(fs::exists(fs::path(out) / "norm_params.json"));
  REQUIRE(fs::exists(fs::path(out) / "prepared.schema"));

  const std::string first_csv = file_bytes(fs::path(out) / "prepared.csv");
  const std::string first_norm =
      file_bytes(fs::path(out) / "norm_params.json");
  CHECK(run({"prepare", "--data", csv, "--schema", schema, "--out", out})
            .code == 0);
  CHECK(file_bytes(fs::path(out) / "prepared.csv") == first_csv);
  CHECK(file_bytes(fs::path(out) / "norm_params.json") == first_norm);

  // Normalized features stay in the unit interval.
  DatasetSchema ps = load_schema(fs::path(out) / "prepared.schema");
  const Dataset prepared = load_csv(fs::path(out) / "prepared.csv", ps);
  CHECK(prepared.features.minCoeff() >= 0.0);
  CHECK(prepared.features.maxCoeff() <= 1.0);
  CHECK(ps.unlabeled == 14);
}

TEST_CASE("train writes checkpoint, report, and timing") {
  testutil::TempDir dir;
  const auto [csv, schema] = stage_toy(dir.path());
  const std::string out = (dir.path() / "run").string();

  const CliResult r = run(quick_train(csv, schema, out));
  CHECK(r.code == 0);
  CHECK(r.out.find("test MAE") != std::string::npos);
  REQUIRE(fs::exists(fs::path(out) / "checkpoint.json"));
  REQUIRE(fs::exists(fs::path(out) / "report.json"));
  REQUIRE(fs::exists(fs::path(out) / "timing.json"));

  const nlohmann::json report = read_json_file(fs::path(out) / "report.json");
  CHECK(report.at("method") == "dml-s2r");
  CHECK(report.at("history").at("psm_loss").size() == 2);
  CHECK(report.at("history").at("rll_loss").size() == 2);
  CHECK(report.at("config").at("rll").at("k") == 2);

  const nlohmann::json timing = read_json_file(fs::path(out) / "timing.json");
  CHECK(timing.at("cycle_seconds").size() == 2);
}

TEST_CASE("one cycle leaves one history entry") {
  testutil::TempDir dir;
  const auto [csv, schema] = stage_toy(dir.path());
  const std::string out = (dir.path() / "one").string();
  auto args = quick_train(csv, schema, out);
  args[12] = "1";  // --cycles value
  CHECK(run(args).code == 0);
  const nlohmann::json report = read_json_file(fs::path(out) / "report.json");
  CHECK(report.at("history").at("psm_loss").size() == 1);
}

TEST_CASE("two identical train runs produce identical bytes") {
  testutil::TempDir dir;
  const auto [csv, schema] = stage_toy(dir.path());
  const std::string out_a = (dir.path() / "a").string();
  const std::string out_b = (dir.path() / "b").string();
  CHECK(run(quick_train(csv, schema, out_a)).code == 0);
  CHECK(run(quick_train(csv, schema, out_b)).code == 0);
  CHECK(file_bytes(fs::path(out_a) / "checkpoint.json") ==
        file_bytes(fs::path(out_b) / "checkpoint.json"));
  CHECK(file_bytes(fs::path(out_a) / "report.json") ==
        file_bytes(fs::path(out_b) / "report.json"));
}

TEST_CASE("oversized k is rejected as a config error naming the cap") {
  testutil::TempDir dir;
  const auto [csv, schema] = stage_toy(dir.path());
  auto args = quick_train(csv, schema, (dir.path() / "k").string());
  args[14] = "10";  // --k value; pool is 14 < 2k = 20
  const CliResult r = run(args);
  CHECK(r.code == 2);
  CHECK(r.err.find("2k") != std::string::npos);
}

TEST_CASE("train refuses the knn baseline") {
  testutil::TempDir dir;
  const auto [csv, schema] = stage_toy(dir.path());
  auto args = quick_train(csv, schema, (dir.path() / "m").string());
  args.push_back("--method");
  args.push_back("knn-raw");
  CHECK(run(args).code == 2);

  args.back() = "made-up";
  CHECK(run(args).code == 2);
}

TEST_CASE("the echoed configuration reproduces the run") {
  testutil::TempDir dir;
  const auto [csv, schema] = stage_toy(dir.path());
  const std::string out_a = (dir.path() / "echo-a").string();
  const CliResult first = run(quick_train(csv, schema, out_a));
  REQUIRE(first.code == 0);

  const fs::path cfg_file = dir.path() / "echo.cfg";
  std::ofstream(cfg_file) << extract_echo(first.out, "train");

  const std::string out_b = (dir.path() / "echo-b").string();
  const CliResult second = run({"train", "--config", cfg_file.string(),
                                "--out", out_b});
  REQUIRE(second.code == 0);
  CHECK(file_bytes(fs::path(out_a) / "report.json") ==
        file_bytes(fs::path(out_b) / "report.json"));
  CHECK(file_bytes(fs::path(out_a) / "checkpoint.json") ==
        file_bytes(fs::path(out_b) / "checkpoint.json"));
}

TEST_CASE("bench and prepare echoes also round-trip through --config") {
  testutil::TempDir dir;
  const auto [csv, schema] = stage_toy(dir.path());

  const std::string bench_a = (dir.path() / "bench-a").string();
  const CliResult b1 =
      run({"bench", "--data", csv, "--schema", schema, "--out", bench_a,
           "--sizes", "4,6", "--seeds", "2", "--method", "knn-raw"});
  REQUIRE(b1.code == 0);
  const fs::path bench_cfg = dir.path() / "bench.cfg";
  std::ofstream(bench_cfg) << extract_echo(b1.out, "bench");

  const std::string bench_b = (dir.path() / "bench-b").string();
  const CliResult b2 =
      run({"bench", "--config", bench_cfg.string(), "--out", bench_b});
  REQUIRE(b2.code == 0);
  CHECK(file_bytes(fs::path(bench_a) / "toy" / "table.csv") ==
        file_bytes(fs::path(bench_b) / "toy" / "table.csv"));

  const std::string prep_a = (dir.path() / "prep-a").string();
  const CliResult p1 =
      run({"prepare", "--data", csv, "--schema", schema, "--out", prep_a});
  REQUIRE(p1.code == 0);
  const fs::path prep_cfg = dir.path() / "prep.cfg";
  std::ofstream(prep_cfg) << extract_echo(p1.out, "prepare");

  const std::string prep_b = (dir.path() / "prep-b").string();
  const CliResult p2 =
      run({"prepare", "--config", prep_cfg.string(), "--out", prep_b});
  REQUIRE(p2.code == 0);
  CHECK(file_bytes(fs::path(prep_a) / "prepared.csv") ==
        file_bytes(fs::path(prep_b) / "prepared.csv"));
}

TEST_CASE("bench emits a table and per-run reports") {
  testutil::TempDir dir;
  const auto [csv, schema] = stage_toy(dir.path());
  const std::string out = (dir.path() / "bench").string();
  const CliResult r =
      run({"bench", "--data", csv, "--schema", schema, "--out", out,
           "--sizes", "4,6", "--seeds", "2", "--method", "knn-raw"});
  CHECK(r.code == 0);
  CHECK(r.out.find("method,|S|=4,|S|=6") != std::string::npos);
  CHECK(fs::exists(fs::path(out) / "toy" / "table.csv"));
  CHECK(fs::exists(fs::path(out) / "toy" / "table.json"));
  CHECK(fs::exists(fs::path(out) / "toy" / "knn-raw" / "4" / "1.json"));
  CHECK(fs::exists(fs::path(out) / "toy" / "knn-raw" / "6" / "2.json"));
}

TEST_CASE("bench seed handling") {
  testutil::TempDir dir;
  const auto [csv, schema] = stage_toy(dir.path());
  const std::string out = (dir.path() / "seeds").string();
  CHECK(run({"bench", "--data", csv, "--schema", schema, "--out", out,
             "--sizes", "4", "--seeds", "0", "--method", "knn-raw"})
            .code == 2);
  CHECK(run({"bench", "--data", csv, "--schema", schema, "--out", out,
             "--sizes", "4", "--seed-list", "7", "--method", "knn-raw"})
            .code == 0);
  CHECK(fs::exists(fs::path(out) / "toy" / "knn-raw" / "4" / "7.json"));
}

TEST_CASE("bench surfaces failed cells through the exit code") {
  testutil::TempDir dir;
  const auto [csv, schema] = stage_toy(dir.path());
  const std::string out = (dir.path() / "fail").string();
  // |S| = 20 exceeds the 14-sample unlabeled pool precondition.
  const CliResult r =
      run({"bench", "--data", csv, "--schema", schema, "--out", out,
           "--sizes", "4,20", "--seeds", "1", "--method", "knn-raw"});
  CHECK(r.code == 1);
  CHECK(r.err.find("cell") != std::string::npos);
}

TEST_CASE("bench ablation runs both methods") {
  testutil::TempDir dir;
  const auto [csv, schema] = stage_toy(dir.path());
  const std::string out = (dir.path() / "abl").string();
  const CliResult r =
      run({"bench", "--data", csv, "--schema", schema, "--out", out,
           "--sizes", "6", "--seeds", "1", "--ablation", "--cycles", "2",
           "--k", "2"});
  CHECK(r.code == 0);
  CHECK(r.out.find("dml-s2r") != std::string::npos);
  CHECK(r.out.find("step1-only") != std::string::npos);
}
